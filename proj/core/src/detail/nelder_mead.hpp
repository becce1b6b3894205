#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <numeric>

namespace echoplane::detail {

// Derivative-free simplex minimization with a hard cap on evaluations.
template <int N, typename F>
Eigen::Matrix<double, N, 1> nelder_mead(F&& f, const Eigen::Matrix<double, N, 1>& x0, double step,
                                        int max_evals) {
  using V = Eigen::Matrix<double, N, 1>;
  std::array<V, N + 1> x;
  std::array<double, N + 1> fx;
  x[0] = x0;
  for (int i = 0; i < N; ++i) {
    x[i + 1] = x0;
    x[i + 1](i) += step;
  }
  int evals = 0;
  for (int i = 0; i <= N; ++i, ++evals) fx[i] = f(x[i]);

  std::array<int, N + 1> order;
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    const int best = order[0], worst = order[N], second = order[N - 1];
    V centroid = V::Zero();
    for (int i = 0; i < N; ++i) centroid += x[order[i]];
    centroid /= N;

    const V xr = centroid + (centroid - x[worst]);
    const double fr = f(xr);
    ++evals;
    if (fr < fx[best]) {
      const V xe = centroid + 2.0 * (centroid - x[worst]);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
    } else if (fr < fx[second]) {
      x[worst] = xr;
      fx[worst] = fr;
    } else {
      const V xc = fr < fx[worst] ? V(centroid + 0.5 * (xr - centroid)) : V(centroid + 0.5 * (x[worst] - centroid));
      const double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, fx[worst])) {
        x[worst] = xc;
        fx[worst] = fc;
      } else {
        for (int i = 0; i <= N; ++i) {
          if (i == best) continue;
          x[i] = x[best] + 0.5 * (x[i] - x[best]);
          fx[i] = f(x[i]);
          ++evals;
        }
      }
    }
  }
  const int best = static_cast<int>(std::min_element(fx.begin(), fx.end()) - fx.begin());
  return x[best];
}

}  // namespace echoplane::detail
