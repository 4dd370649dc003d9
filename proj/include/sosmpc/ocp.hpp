#pragma once

// One horizon window of an optimal control problem, already in polynomial
// form.  Dynamics are affine in the input,
//   xdot = f0(x) + sum_i fi(x) u_i,       u_i in [-1, 1],
// the running cost is affine in the input,
//   c(x, t, u) = c0(x, t) + sum_i ci(x, t) u_i,
// with a terminal cost g(x) at t_end, a state ball ||x|| <= radius on which
// all certificates are required to hold, and a box region whose weighting
// measure defines the objective of the value-bound program.

#include <stdexcept>
#include <vector>

#include "sosmpc/polynomial.hpp"

namespace sosmpc {

struct OCPInstance {
  int n = 0;  // number of states
  int m = 0;  // number of inputs
  std::vector<Polynomial> cost;                   // m+1 polys in n+1 vars (x, t)
  std::vector<std::vector<Polynomial>> dynamics;  // (m+1) rows, each n polys in n vars
  Polynomial terminal;                            // g(x), n vars
  double t0 = 0.0;
  double t_end = 0.0;
  double radius = 0.0;
  Box region;  // n-dimensional integration region for the objective

  void validate() const {
    if (n < 1) throw std::invalid_argument("OCPInstance: need at least one state");
    if (m < 0) throw std::invalid_argument("OCPInstance: negative input count");
    if (static_cast<int>(cost.size()) != m + 1)
      throw std::invalid_argument("OCPInstance: cost needs m+1 pieces");
    for (const auto& c : cost)
      if (c.nvars() != n + 1)
        throw std::invalid_argument("OCPInstance: cost pieces live in (x, t)");
    if (static_cast<int>(dynamics.size()) != m + 1)
      throw std::invalid_argument("OCPInstance: dynamics needs m+1 rows");
    for (const auto& row : dynamics) {
      if (static_cast<int>(row.size()) != n)
        throw std::invalid_argument("OCPInstance: each dynamics row needs n components");
      for (const auto& f : row)
        if (f.nvars() != n)
          throw std::invalid_argument("OCPInstance: dynamics components live in x");
    }
    if (terminal.nvars() != n)
      throw std::invalid_argument("OCPInstance: terminal cost lives in x");
    if (!(t_end > t0)) throw std::invalid_argument("OCPInstance: need t_end > t0");
    if (!(radius > 0.0)) throw std::invalid_argument("OCPInstance: need radius > 0");
    if (region.dim() != n)
      throw std::invalid_argument("OCPInstance: region dimension mismatch");
  }
};

}  // namespace sosmpc
