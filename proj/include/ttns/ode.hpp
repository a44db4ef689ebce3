#pragma once

#include <functional>

#include "ttns/dense_tensor.hpp"

namespace ttns {

enum class OdeMethod { euler, heun, rk4 };

struct OdeConfig {
  OdeMethod method = OdeMethod::rk4;
  int substeps = 1;
};

struct OdeBlowup : std::runtime_error {
  explicit OdeBlowup(double t)
      : std::runtime_error("ode: non-finite values at t = " + std::to_string(t)), time(t) {}
  double time;
};

using OdeField = std::function<DenseTensor(double, const DenseTensor&)>;

/// Fixed-step explicit integration of dy/dt = f(t, y) from t0 to t1 with
/// cfg.substeps equal steps of the chosen method.
inline DenseTensor ode_solve(const OdeField& f, DenseTensor y0, double t0, double t1,
                             const OdeConfig& cfg) {
  if (t1 < t0) throw std::invalid_argument("ode_solve: t1 must be >= t0");
  if (cfg.substeps < 1) throw std::invalid_argument("ode_solve: substeps must be >= 1");
  if (t1 == t0) return y0;
  const double h = (t1 - t0) / cfg.substeps;
  DenseTensor y = std::move(y0);
  for (int s = 0; s < cfg.substeps; ++s) {
    const double t = t0 + s * h;
    switch (cfg.method) {
      case OdeMethod::euler: {
        DenseTensor k1 = f(t, y);
        k1 *= Complex(h, 0.0);
        y += k1;
        break;
      }
      case OdeMethod::heun: {
        DenseTensor k1 = f(t, y);
        DenseTensor pred = y;
        {
          DenseTensor tmp = k1;
          tmp *= Complex(h, 0.0);
          pred += tmp;
        }
        DenseTensor k2 = f(t + h, pred);
        k1 += k2;
        k1 *= Complex(0.5 * h, 0.0);
        y += k1;
        break;
      }
      case OdeMethod::rk4: {
        DenseTensor k1 = f(t, y);
        DenseTensor y2 = y;
        {
          DenseTensor tmp = k1;
          tmp *= Complex(0.5 * h, 0.0);
          y2 += tmp;
        }
        DenseTensor k2 = f(t + 0.5 * h, y2);
        DenseTensor y3 = y;
        {
          DenseTensor tmp = k2;
          tmp *= Complex(0.5 * h, 0.0);
          y3 += tmp;
        }
        DenseTensor k3 = f(t + 0.5 * h, y3);
        DenseTensor y4 = y;
        {
          DenseTensor tmp = k3;
          tmp *= Complex(h, 0.0);
          y4 += tmp;
        }
        DenseTensor k4 = f(t + h, y4);
        k2 += k3;
        k2 *= Complex(2.0, 0.0);
        k1 += k2;
        k1 += k4;
        k1 *= Complex(h / 6.0, 0.0);
        y += k1;
        break;
      }
    }
    if (!all_finite(y)) throw OdeBlowup(t + h);
  }
  return y;
}

}  // namespace ttns
