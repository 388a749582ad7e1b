#pragma once

#include <limits>

namespace opvfem {

/// Iteration maxima observed while driving one voltage point to steady state.
struct EquationStats {
  int newton = 0;
  int gmres = 0;

  void record(int newton_iters, int gmres_iters) {
    if (newton_iters > newton) newton = newton_iters;
    if (gmres_iters > gmres) gmres = gmres_iters;
  }
};

struct SolveReport {
  long time_steps = 0;
  bool converged = false;
  double final_increment = std::numeric_limits<double>::quiet_NaN();
  EquationStats coupled;   // fully coupled Newton system
  EquationStats poisson;
  EquationStats electron;
  EquationStats hole;
  EquationStats exciton;
  long stabilization_clips = 0;  // density-floor events in the decoupled update

  int max_newton() const {
    int m = coupled.newton;
    for (int v : {poisson.newton, electron.newton, hole.newton})
      if (v > m) m = v;
    return m;
  }
  int max_gmres() const {
    int m = coupled.gmres;
    for (int v : {poisson.gmres, electron.gmres, hole.gmres, exciton.gmres})
      if (v > m) m = v;
    return m;
  }
};

}  // namespace opvfem
