// Python surface. Structured inputs and outputs travel as JSON strings so the
// binding stays a thin shim over the C++ types; the package wrapper decodes.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "slscert/gauss.hpp"
#include "slscert/harness.hpp"
#include "slscert/laplace.hpp"
#include "slscert/model.hpp"
#include "slscert/pmle.hpp"
#include "slscert/sobolev.hpp"

namespace py = pybind11;
using namespace sls;

namespace {

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

PsdOperator diag_op(const std::vector<double>& d) {
  Vec v(int(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) v[int(i)] = d[i];
  return PsdOperator::diagonal(v);
}

std::string fit_json(const std::string& spec) {
  SlsModel m = model_from_json(nlohmann::json::parse(spec));
  PmleResult r = fit(m, Vec::Zero(m.dim));
  nlohmann::json out;
  out["maximizer"] = vec_json(r.maximizer);
  out["objective_at_max"] = r.objective_at_max;
  out["grad_norm"] = r.grad_norm;
  out["iterations"] = r.iterations;
  out["converged"] = r.converged;
  return out.dump();
}

std::string laplace_json(const std::string& spec, double x) {
  SlsModel m = model_from_json(nlohmann::json::parse(spec));
  PmleResult r = fit(m, Vec::Zero(m.dim));
  LaplaceReport rep = laplace_report(m, r.maximizer, x);
  nlohmann::json out = rep.to_json();
  out["maximizer"] = vec_json(r.maximizer);
  return out.dump();
}

std::string kappa_json(const std::vector<double>& lambdas) {
  Vec v(int(lambdas.size()));
  for (std::size_t i = 0; i < lambdas.size(); ++i) v[int(i)] = lambdas[i];
  SpectrumProfile p = kappa_profile(v);
  nlohmann::json out;
  out["kappa"] = p.kappa;
  out["Lambda1"] = p.Lambda1;
  out["Lambda2"] = p.Lambda2;
  out["branch"] = p.branch == KappaBranch::many   ? "many"
                  : p.branch == KappaBranch::spike ? "spike"
                                                   : "two";
  return out.dump();
}

double comparison_py(const std::vector<double>& lam_xi, const std::vector<double>& lam_eta,
                     double a_norm_sq) {
  Vec lx(int(lam_xi.size())), le(int(lam_eta.size()));
  for (std::size_t i = 0; i < lam_xi.size(); ++i) lx[int(i)] = lam_xi[i];
  for (std::size_t i = 0; i < lam_eta.size(); ++i) le[int(i)] = lam_eta[i];
  SpectrumProfile px = kappa_profile(lx), pe = kappa_profile(le);
  return comparison_bound(px, pe, a_norm_sq, lambda_l1_diff(px, pe));
}

double effective_dim_py(const std::vector<double>& d2, const std::vector<double>& g02,
                        double w) {
  return effective_dim_of_scale(diag_op(d2), diag_op(g02), w);
}

double tradeoff_py(const std::vector<double>& d2, const std::vector<double>& g02, double x,
                   double C0) {
  return solve_tradeoff(diag_op(d2), diag_op(g02), x, C0);
}

py::tuple run_py(const std::string& config) {
  ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config));
  RunResult r = run(cfg);
  return py::make_tuple(r.exit_code, r.report.dump());
}

std::string compare_py(const std::string& dir_a, const std::string& dir_b) {
  DiffReport d = compare_runs(dir_a, dir_b);
  nlohmann::json out;
  out["identical_bytes"] = d.identical_bytes;
  out["version_match"] = d.version_match;
  out["note"] = d.note;
  out["structural"] = d.structural;
  nlohmann::json numeric = nlohmann::json::array();
  for (const auto& e : d.numeric)
    numeric.push_back({{"path", e.path}, {"a", e.a}, {"b", e.b}, {"severity", e.severity}});
  out["numeric"] = numeric;
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "penalized-MLE and Laplace certificates";
  mod.def("version", [] { return std::string(kHarnessVersion); });
  mod.def("fit", &fit_json, py::arg("model_spec"),
          "maximize a model spec (JSON string), returns a JSON fit summary");
  mod.def("laplace_report", &laplace_json, py::arg("model_spec"), py::arg("x") = 3.0,
          "fit and certify the Gaussian approximation, returns JSON");
  mod.def("kappa_profile", &kappa_json, py::arg("lambdas"),
          "spectral density functional of a covariance spectrum, returns JSON");
  mod.def("comparison_bound", &comparison_py, py::arg("lambdas_xi"), py::arg("lambdas_eta"),
          py::arg("a_norm_sq") = 0.0,
          "TV comparison bound for two centered Gaussian ball families");
  mod.def("effective_dim", &effective_dim_py, py::arg("d2_diag"), py::arg("g02_diag"),
          py::arg("w"), "tr{D^2 (D^2 + w G0^2)^{-1}} for diagonal operators");
  mod.def("solve_tradeoff", &tradeoff_py, py::arg("d2_diag"), py::arg("g02_diag"),
          py::arg("x"), py::arg("C0"), "scale w solving sqrt(p(w)) + sqrt(2x) = C0 sqrt(w)");
  mod.def("run", &run_py, py::arg("config"),
          "run an experiment config (JSON string), returns (exit_code, report_json)");
  mod.def("compare_runs", &compare_py, py::arg("dir_a"), py::arg("dir_b"),
          "field-wise diff of two run directories, returns JSON");
}
