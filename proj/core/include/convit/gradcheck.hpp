#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "convit/rng.hpp"
#include "convit/tape.hpp"
#include "convit/tensor.hpp"

namespace convit {

struct FdReport {
  double max_rel_err = 0.0;
  int worst_input = -1;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  // Coordinates discarded by the screened variants because the central
  // difference could not resolve the requested tolerance there.
  int screened_out = 0;
};

namespace detail {

// Compares analytic gradients against central differences at the given
// coordinates. Relative error is |a - n| / (|a| + 1e-8), maximised over all
// probed elements.
//
// With screen_tol > 0, every coordinate is probed at eps, eps/2 and eps/4 and
// the oracle's own error is bounded from the Richardson residuals r1 =
// |n(eps) - n(eps/2)| and r2 = |n(eps/2) - n(eps/4)|: max(r1, 4 r2) tracks
// the truncation term of n(eps) for smooth f (where r2 = r1/4) and explodes
// when any probe crosses a relu kink — a crossing inside the smallest step
// still grows r2 relative to r1, so no crossing band escapes. Accumulated
// rounding is bounded by ~1e-13 |f| / step. Where the combined bound exceeds
// what screen_tol can resolve the oracle has no verdict and the coordinate
// is skipped. The resolvability scale uses max(|analytic|, |numeric|), so a
// backward pass that drops or mangles a gradient keeps the scale large and
// is never screened out.
template <typename S, class F>
FdReport fd_check_coords(F&& f, std::vector<Tensor<S>>& inputs, double eps,
                         const std::vector<std::vector<std::int64_t>>& coords,
                         double screen_tol = 0.0) {
  if (inputs.empty()) throw ContractError("finite_diff_check: no inputs");
  if (eps <= 0.0) throw ContractError("finite_diff_check: eps must be positive");
  if (coords.size() != inputs.size())
    throw ContractError("finite_diff_check: coordinate list size mismatch");

  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  // Analytic pass under a private tape.
  std::vector<std::vector<S>> analytic;
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = f();
    if (loss.numel() != 1) throw ContractError("finite_diff_check: f must return a scalar");
    tape.backward(loss);
    analytic.reserve(inputs.size());
    for (auto& t : inputs) analytic.push_back(t.grad());
  }

  // Numeric pass with no tape active.
  FdReport rep;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].value();
    for (std::int64_t idx : coords[ti]) {
      if (idx < 0 || idx >= inputs[ti].numel())
        throw ContractError("finite_diff_check: coordinate out of range");
      const auto ui = static_cast<std::size_t>(idx);
      const S saved = vals[ui];
      vals[ui] = saved + static_cast<S>(eps);
      const double fp = static_cast<double>(f().value()[0]);
      vals[ui] = saved - static_cast<S>(eps);
      const double fm = static_cast<double>(f().value()[0]);
      double numeric = (fp - fm) / (2.0 * eps);
      const double an = static_cast<double>(analytic[ti][ui]);
      if (screen_tol > 0.0) {
        vals[ui] = saved + static_cast<S>(0.5 * eps);
        const double fph = static_cast<double>(f().value()[0]);
        vals[ui] = saved - static_cast<S>(0.5 * eps);
        const double fmh = static_cast<double>(f().value()[0]);
        vals[ui] = saved + static_cast<S>(0.25 * eps);
        const double fpq = static_cast<double>(f().value()[0]);
        vals[ui] = saved - static_cast<S>(0.25 * eps);
        const double fmq = static_cast<double>(f().value()[0]);
        vals[ui] = saved;
        const double n_half = (fph - fmh) / eps;
        const double n_quarter = (fpq - fmq) / (0.5 * eps);
        const double r1 = std::abs(numeric - n_half);
        const double r2 = std::abs(n_half - n_quarter);
        const double trunc = (4.0 / 3.0) * std::max(r1, 4.0 * r2);
        const double fmag =
            std::max({std::abs(fp), std::abs(fm), std::abs(fph), std::abs(fmh), std::abs(fpq),
                      std::abs(fmq)});
        const double round = 1e-13 * fmag / (0.25 * eps);
        const double scale = std::max(std::abs(an), std::abs(n_quarter)) + 1e-8;
        if (trunc + 4.0 * round > 0.5 * screen_tol * scale) {
          ++rep.screened_out;
          continue;
        }
        numeric = n_quarter;
      } else {
        vals[ui] = saved;
      }
      const double rel = std::abs(an - numeric) / (std::abs(an) + 1e-8);
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = static_cast<int>(ti);
        rep.worst_index = idx;
        rep.analytic = an;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace detail

// Checks every element of every input.
template <typename S, class F>
FdReport finite_diff_check(F&& f, std::vector<Tensor<S>> inputs, double eps) {
  std::vector<std::vector<std::int64_t>> coords(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    coords[i].resize(static_cast<std::size_t>(inputs[i].numel()));
    for (std::int64_t j = 0; j < inputs[i].numel(); ++j)
      coords[i][static_cast<std::size_t>(j)] = j;
  }
  return detail::fd_check_coords(std::forward<F>(f), inputs, eps, coords);
}

template <typename S, class F>
FdReport finite_diff_check(F&& f, std::initializer_list<Tensor<S>> inputs, double eps) {
  return finite_diff_check(std::forward<F>(f), std::vector<Tensor<S>>(inputs), eps);
}

// Full sweep with per-coordinate reliability screening (see fd_check_coords).
// For deep compositions whose conditioning varies wildly across coordinates:
// structurally-zero gradients (an attention key bias) and ill-conditioned
// normalization rows make individual probes unresolvable at any single step
// size, while the vast majority of coordinates still adjudicate the backward
// pass at full strength.
template <typename S, class F>
FdReport finite_diff_check_screened(F&& f, std::vector<Tensor<S>> inputs, double eps,
                                    double screen_tol) {
  if (screen_tol <= 0.0) throw ContractError("finite_diff_check_screened: tol must be positive");
  std::vector<std::vector<std::int64_t>> coords(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    coords[i].resize(static_cast<std::size_t>(inputs[i].numel()));
    for (std::int64_t j = 0; j < inputs[i].numel(); ++j)
      coords[i][static_cast<std::size_t>(j)] = j;
  }
  return detail::fd_check_coords(std::forward<F>(f), inputs, eps, coords, screen_tol);
}

template <typename S, class F>
FdReport finite_diff_check_screened(F&& f, std::initializer_list<Tensor<S>> inputs, double eps,
                                    double screen_tol) {
  return finite_diff_check_screened(std::forward<F>(f), std::vector<Tensor<S>>(inputs), eps,
                                    screen_tol);
}

namespace detail {

template <typename S>
std::vector<std::vector<std::int64_t>> spot_coords(const std::vector<Tensor<S>>& inputs,
                                                   int samples_per_input, SplitMix64& rng) {
  if (samples_per_input <= 0)
    throw ContractError("finite_diff_spot_check: samples_per_input must be positive");
  std::vector<std::vector<std::int64_t>> coords(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::int64_t n = inputs[i].numel();
    if (n <= samples_per_input) {
      coords[i].resize(static_cast<std::size_t>(n));
      for (std::int64_t j = 0; j < n; ++j) coords[i][static_cast<std::size_t>(j)] = j;
    } else {
      std::vector<std::int64_t> seen;
      while (static_cast<int>(seen.size()) < samples_per_input) {
        const std::int64_t c = rng.next_int(static_cast<int>(n));
        if (std::find(seen.begin(), seen.end(), c) == seen.end()) seen.push_back(c);
      }
      coords[i] = std::move(seen);
    }
  }
  return coords;
}

}  // namespace detail

// Probes a random subset of elements per input — for large parameter sets
// where a full sweep is too slow. Distinct coordinates per input.
template <typename S, class F>
FdReport finite_diff_spot_check(F&& f, std::vector<Tensor<S>> inputs, double eps,
                                int samples_per_input, SplitMix64& rng) {
  auto coords = detail::spot_coords(inputs, samples_per_input, rng);
  return detail::fd_check_coords(std::forward<F>(f), inputs, eps, coords);
}

// Spot check with reliability screening; see finite_diff_check_screened.
template <typename S, class F>
FdReport finite_diff_spot_check_screened(F&& f, std::vector<Tensor<S>> inputs, double eps,
                                         int samples_per_input, SplitMix64& rng,
                                         double screen_tol) {
  if (screen_tol <= 0.0)
    throw ContractError("finite_diff_spot_check_screened: tol must be positive");
  auto coords = detail::spot_coords(inputs, samples_per_input, rng);
  return detail::fd_check_coords(std::forward<F>(f), inputs, eps, coords, screen_tol);
}

}  // namespace convit
