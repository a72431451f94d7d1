#pragma once

// Central finite-difference checks against Tape::backward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "suprim/diffcore.hpp"

namespace suprim::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTol = 1e-4;

/// |a - n| / max(|a|, |n|); gradients below `floor` in both estimates are compared absolutely.
inline double rel_error(double a, double n, double floor = 1e-7) {
  const double scale = std::max(std::abs(a), std::abs(n));
  if (scale < floor) return std::abs(a - n) / floor;
  return std::abs(a - n) / scale;
}

inline dc::Array2 random_array(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  dc::Array2 a(r, c);
  for (double& x : a.data) x = u(rng);
  return a;
}

using LossFn = std::function<dc::Var(dc::Tape&, dc::ParamStore&)>;

inline double eval_loss(dc::ParamStore& p, const LossFn& f) {
  dc::Tape t(false);
  return t.value(f(t, p))(0, 0);
}

/// Compares every parameter element; returns the worst relative error.
inline double check_all_elements(dc::ParamStore& p, const LossFn& f, std::vector<std::string>* notes = nullptr) {
  p.zero_grad();
  {
    dc::Tape t;
    t.backward(f(t, p));
  }
  double worst = 0.0;
  for (dc::ParamId id = 0; id < p.size(); ++id) {
    for (std::size_t i = 0; i < p.value(id).size(); ++i) {
      const double keep = p.value(id).data[i];
      p.value(id).data[i] = keep + kFdStep;
      const double up = eval_loss(p, f);
      p.value(id).data[i] = keep - kFdStep;
      const double down = eval_loss(p, f);
      p.value(id).data[i] = keep;
      const double numeric = (up - down) / (2.0 * kFdStep);
      const double e = rel_error(p.grad(id).data[i], numeric);
      worst = std::max(worst, e);
      if (e >= kFdTol && notes != nullptr) {
        std::ostringstream os;
        os << p.name(id) << "[" << i << "] analytic " << p.grad(id).data[i] << " numeric " << numeric;
        notes->push_back(os.str());
      }
    }
  }
  return worst;
}

/// Directional derivative along a random unit direction over all parameters.
inline double check_direction(dc::ParamStore& p, const LossFn& f, std::uint64_t seed,
                              std::vector<std::string>* notes = nullptr) {
  p.zero_grad();
  {
    dc::Tape t;
    t.backward(f(t, p));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<dc::Array2> dir;
  double norm2 = 0.0;
  for (dc::ParamId id = 0; id < p.size(); ++id) {
    dc::Array2 d(p.value(id).rows, p.value(id).cols);
    for (double& x : d.data) {
      x = n(rng);
      norm2 += x * x;
    }
    dir.push_back(std::move(d));
  }
  const double inv = 1.0 / std::sqrt(norm2);
  double analytic = 0.0;
  for (dc::ParamId id = 0; id < p.size(); ++id) {
    for (std::size_t i = 0; i < dir[id].size(); ++i) {
      dir[id].data[i] *= inv;
      analytic += dir[id].data[i] * p.grad(id).data[i];
    }
  }
  const auto shift = [&](double h) {
    for (dc::ParamId id = 0; id < p.size(); ++id) {
      for (std::size_t i = 0; i < dir[id].size(); ++i) p.value(id).data[i] += h * dir[id].data[i];
    }
  };
  shift(kFdStep);
  const double up = eval_loss(p, f);
  shift(-2.0 * kFdStep);
  const double down = eval_loss(p, f);
  shift(kFdStep);
  const double numeric = (up - down) / (2.0 * kFdStep);
  if (notes != nullptr) {
    std::ostringstream os;
    os << "directional analytic " << analytic << " numeric " << numeric;
    notes->push_back(os.str());
  }
  return rel_error(analytic, numeric);
}

}  // namespace suprim::testing
