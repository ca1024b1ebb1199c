// Central finite-difference checking of tape gradients.
//
// The check is an independent route: it only evaluates forward passes (on
// non-recording tapes), so agreement with the tape's backward sweep
// validates every backward rule on the path.
#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "meshtex/tape.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;

  // Central differences carry O(eps^2) truncation plus rounding noise of
  // roughly |f| * 1e-16 / eps, about 1e-11 at the default step. Elements
  // whose absolute disagreement sits below `atol` are counted as matching
  // so that the relative error of a near-zero gradient reflects the
  // gradient, not the probe noise. A wrong rule (sign flip, missing term)
  // disagrees by the gradient's own magnitude and is never masked.
  void fold(double analytic, double numeric, double atol) {
    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    max_abs_err = std::max(max_abs_err, abs_err);
    if (abs_err > atol && denom > 0.0) {
      max_rel_err = std::max(max_rel_err, abs_err / denom);
    }
  }

  void merge(const GradCheckReport& o) {
    max_rel_err = std::max(max_rel_err, o.max_rel_err);
    max_abs_err = std::max(max_abs_err, o.max_abs_err);
  }
};

// LossFn: Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)
// building a scalar loss from the (watched) inputs. Every element of every
// input is perturbed by a central difference and compared against the
// tape gradient.
template <typename LossFn>
GradCheckReport finite_difference_check(LossFn&& fn,
                                        std::vector<Tensor<double>> inputs,
                                        double eps = 1e-5,
                                        double atol = 0.0) {
  Tape<double> tape;
  std::vector<Tensor<double>> watched;
  watched.reserve(inputs.size());
  for (auto& in : inputs) watched.push_back(tape.watch(in));
  Tensor<double> loss = fn(tape, watched);
  tape.backward(loss);
  std::vector<Tensor<double>> grads;
  grads.reserve(watched.size());
  for (auto& w : watched) grads.push_back(tape.grad(w));

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t(/*recording=*/false);
    std::vector<Tensor<double>> ws;
    ws.reserve(xs.size());
    for (const auto& x : xs) ws.push_back(t.watch(x));
    return fn(t, ws).item();
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = (*inputs[i].data)[j];
      const double h = eps * std::max(1.0, std::abs(x0));
      std::vector<Tensor<double>> probe;
      probe.reserve(inputs.size());
      for (const auto& in : inputs) probe.push_back(in.detached_copy());
      (*probe[i].data)[j] = x0 + h;
      const double fp = eval(probe);
      (*probe[i].data)[j] = x0 - h;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * h);
      report.fold((*grads[i].data)[j], numeric, atol);
    }
  }
  return report;
}

// A named check with its tolerance, used by the grad-check command and the
// acceptance suite.
struct GradSuite {
  std::string name;
  double tol = 1e-5;
  std::function<GradCheckReport()> run;
};

// Runs each suite, prints one line per suite, returns true when all pass.
inline bool run_grad_suites(const std::vector<GradSuite>& suites,
                            std::ostream& os) {
  bool all_ok = true;
  for (const auto& s : suites) {
    const GradCheckReport rep = s.run();
    const bool ok = rep.max_rel_err <= s.tol;
    all_ok = all_ok && ok;
    os << "suite " << s.name << " max_rel_err " << rep.max_rel_err << " tol "
       << s.tol << (ok ? " PASS" : " FAIL") << "\n";
  }
  return all_ok;
}

}  // namespace meshtex
