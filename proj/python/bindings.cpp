#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixshap/error.hpp"
#include "mixshap/gaussian.hpp"
#include "mixshap/oracle.hpp"
#include "mixshap/parallel.hpp"
#include "mixshap/simlab.hpp"
#include "mixshap/tabular_io.hpp"

namespace py = pybind11;
using namespace mixshap;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// dict / list / str -> nlohmann::json (strings are parsed as JSON documents)
nlohmann::json to_json(const py::handle& obj) {
  if (py::isinstance<py::str>(obj)) return nlohmann::json::parse(obj.cast<std::string>());
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

MixedTable table_from(const FeatureSchema& schema, const RowMatrix& data) {
  if (data.cols() != schema.size()) throw Error(ErrorCode::ArityMismatch, "data width differs from the schema");
  return MixedTable::from_dense(schema, std::vector<double>(data.data(), data.data() + data.size()));
}

py::dict result_dict(const ShapleyResult& r) {
  py::dict d;
  d["phi0"] = r.phi0;
  d["phi"] = r.phi;
  return d;
}

MethodSpec method_from(const py::handle& method) {
  if (py::isinstance<py::str>(method)) return method_from_json(method.cast<std::string>());
  return method_from_json(to_json(method));
}

}  // namespace

PYBIND11_MODULE(mixshap, m) {
  m.doc() = "Conditional Shapley values for mixed categorical and continuous features";
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "shapley_direct",
      [](const std::vector<double>& v) {
        int M = 0;
        while ((std::size_t{1} << M) < v.size()) ++M;
        return result_dict(shapley_direct(ContributionVector(M, v)));
      },
      py::arg("v"), "Exact Shapley values from v(S) for all 2^M coalitions in mask order.");

  m.def(
      "kernel_shap",
      [](const std::vector<double>& v, bool exact) {
        int M = 0;
        while ((std::size_t{1} << M) < v.size()) ++M;
        return result_dict(kernel_shap_solve(ContributionVector(M, v),
                                             exact ? EndpointConstraint::Exact : EndpointConstraint::Surrogate));
      },
      py::arg("v"), py::arg("exact") = true, "Kernel SHAP weighted least squares over all coalitions.");

  m.def(
      "group_shapley",
      [](const std::vector<double>& phi, const std::vector<std::vector<int>>& groups) {
        ShapleyResult r;
        r.phi = phi;
        const GroupedShapley g = group_shapley(r, groups);
        return py::make_tuple(g.values, g.ranks);
      },
      py::arg("phi"), py::arg("groups"));

  m.def("bvn_upper", &bvn_upper, py::arg("h"), py::arg("k"), py::arg("r"));

  m.def(
      "mvn_rectangle_prob",
      [](const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& lower,
         const Eigen::VectorXd& upper, double accuracy) {
        const ProbabilityEstimate p = mvn_rectangle_prob(MvnSpec(mu, sigma), Rectangle(lower, upper), accuracy);
        return py::make_tuple(p.value, p.error);
      },
      py::arg("mu"), py::arg("sigma"), py::arg("lower"), py::arg("upper"), py::arg("accuracy") = kDefaultRectangleAccuracy,
      "P(lower < X <= upper) and its error estimate.");

  m.def(
      "conditional_mvn",
      [](const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const std::vector<int>& given,
         const std::vector<double>& values) {
        const MvnSpec c = conditional_mvn(MvnSpec(mu, sigma), given, values);
        return py::make_tuple(c.mu, c.sigma);
      },
      py::arg("mu"), py::arg("sigma"), py::arg("given"), py::arg("values"));

  m.def(
      "fit_ctree",
      [](const py::object& schema, const RowMatrix& data, std::vector<int> predictors, std::vector<int> responses,
         double alpha, int min_node) {
        const FeatureSchema s = schema_from_json(to_json(schema));
        CtreeConfig cfg;
        cfg.alpha = alpha;
        cfg.min_node = min_node;
        return from_json(fit_ctree(table_from(s, data), std::move(predictors), std::move(responses), cfg).to_json());
      },
      py::arg("schema"), py::arg("data"), py::arg("predictors"), py::arg("responses"), py::arg("alpha") = 0.5,
      py::arg("min_node") = 7, "Conditional inference tree as a JSON-like dict.");

  m.def(
      "explain",
      [](const py::object& schema, const RowMatrix& train, const RowMatrix& test, const py::object& model,
         const py::object& method, std::uint64_t seed, int threads) {
        const FeatureSchema s = schema_from_json(to_json(schema));
        const MixedTable tr = table_from(s, train);
        const MixedTable te = table_from(s, test);
        const LinearModelSpec f = linear_model_from_json(to_json(model), s);
        const MethodSpec ms = method_from(method);
        std::vector<ShapleyResult> out(static_cast<std::size_t>(te.n()));
        {
          py::gil_scoped_release release;
          const FittedSampler sampler = fit_method(ms, tr, threads);
          parallel_for(te.n(), threads, [&](int i) {
            out[static_cast<std::size_t>(i)] =
                explain_observation(ms, sampler, f, te.row(i), s, derive_seed(seed, {5, static_cast<std::uint64_t>(i)}));
          });
        }
        RowMatrix phi(te.n(), s.size());
        Eigen::VectorXd phi0(te.n()), pred(te.n());
        for (int i = 0; i < te.n(); ++i) {
          const ShapleyResult& r = out[static_cast<std::size_t>(i)];
          phi0(i) = r.phi0;
          pred(i) = r.predicted;
          for (int j = 0; j < s.size(); ++j) phi(i, j) = r.phi[static_cast<std::size_t>(j)];
        }
        py::dict d;
        d["phi0"] = phi0;
        d["phi"] = phi;
        d["prediction"] = pred;
        return d;
      },
      py::arg("schema"), py::arg("train"), py::arg("test"), py::arg("model"), py::arg("method") = "ctree",
      py::arg("seed") = 1, py::arg("threads") = 1,
      "Shapley values of the test rows (dense form, levels 1..L) under a linear model.");

  m.def(
      "true_shapley",
      [](const py::object& distribution, const py::object& model, const std::vector<double>& x) {
        const ThresholdGaussianSpec d = threshold_gaussian_from_json(to_json(distribution));
        const LinearModelSpec f = linear_model_from_json(to_json(model), d.schema());
        const ShapleyResult r = true_shapley(d, f, x);
        py::dict out = result_dict(r);
        out["prediction"] = r.predicted;
        return out;
      },
      py::arg("distribution"), py::arg("model"), py::arg("x"),
      "Exact Shapley values under a threshold-Gaussian distribution.");

  m.def(
      "simulate",
      [](const py::object& grid) {
        const GridConfig g = grid_from_json(to_json(grid));
        GridResult r;
        {
          py::gil_scoped_release release;
          r = run_grid(g);
        }
        py::dict d;
        d["results_csv"] = results_csv(r);
        d["table"] = render_table(r);
        d["plot_tsv"] = plot_tsv(r);
        d["failures"] = r.failures();
        return d;
      },
      py::arg("grid"), "Runs a simulation grid (same JSON as the command-line tool).");
}
