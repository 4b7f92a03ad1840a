#include "rlrds/optimize.hpp"

#include <cmath>
#include <limits>

#include "rlrds/errors.hpp"

namespace rlrds {

NewtonResult maximize_newton(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& opt) {
    const auto n = x0.size();
    NewtonResult res;
    res.x = std::move(x0);
    Eigen::VectorXd g(n);
    Eigen::MatrixXd h(n, n);
    res.value = f(res.x, &g, &h);
    if (!std::isfinite(res.value)) throw NumericalError("newton: starting point outside the domain");

    double mu = 0.0;
    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        res.grad_norm = g.cwiseAbs().maxCoeff();
        if (res.grad_norm <= opt.grad_tol) {
            res.converged = true;
            return res;
        }
        const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        bool stepped = false;
        for (int attempt = 0; attempt < 40 && !stepped; ++attempt) {
            Eigen::MatrixXd a = -h;
            a.diagonal().array() += mu * scale;
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            if (llt.info() != Eigen::Success) {
                mu = mu == 0.0 ? 1e-8 : mu * 10.0;
                continue;
            }
            const Eigen::VectorXd d = llt.solve(g);
            const double slope = g.dot(d);
            double t = 1.0;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                const Eigen::VectorXd trial = res.x + t * d;
                const double ft = f(trial, nullptr, nullptr);
                if (std::isfinite(ft) && ft >= res.value + 1e-4 * t * slope) {
                    res.x = trial;
                    stepped = true;
                    break;
                }
            }
            if (stepped) {
                mu = mu * 0.1;
                if (mu < 1e-12) mu = 0.0;
            } else {
                mu = mu == 0.0 ? 1e-6 : mu * 10.0;
            }
        }
        if (!stepped) break;
        res.value = f(res.x, &g, &h);
    }
    res.grad_norm = g.cwiseAbs().maxCoeff();
    res.converged = res.grad_norm <= opt.grad_tol;
    return res;
}

}  // namespace rlrds
