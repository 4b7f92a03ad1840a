#pragma once

#include <Eigen/Dense>
#include <functional>

namespace rlrds {

struct NewtonOptions {
    double grad_tol = 1e-8;
    int max_iter = 200;
};

struct NewtonResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double grad_norm = 0.0;  // infinity norm at x
    int iterations = 0;
    bool converged = false;
};

/// Objective returns f(x) and fills gradient and Hessian; f = -inf marks x outside the domain.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess)>;

/// Maximize f by Newton steps with Levenberg damping when the Hessian is not
/// negative definite, and Armijo backtracking.
NewtonResult maximize_newton(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& opt = {});

}  // namespace rlrds
