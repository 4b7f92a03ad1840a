#include "rlrds/branching.hpp"

#include <cmath>
#include <limits>

#include "rlrds/errors.hpp"

namespace rlrds {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * M_PI);

int omega_len(const BranchingParams& b) { return b.diagonal ? b.p : b.p * b.p; }

/// log-density of the truncated exponential and its first two derivatives in the rate.
struct TruncExpTerm {
    double logpdf, d1, d2;
};

TruncExpTerm truncexp_term(double u, double zeta, double a, double b) {
    const double w = b - a;
    const double e = std::exp(-zeta * w);
    const double q = -std::expm1(-zeta * w);
    const double r1 = (-a + b * e) / q;      // D'/D
    const double r2 = (a * a - b * b * e) / q;  // D''/D
    TruncExpTerm t;
    t.logpdf = std::log(zeta) - zeta * u + zeta * a - std::log(q);
    t.d1 = 1.0 / zeta - u - r1;
    t.d2 = -1.0 / (zeta * zeta) - (r2 - r1 * r1);
    return t;
}

/// log sum_{l=0}^{L} exp(l tau) / l!, with the mean and variance of l under those weights.
struct FamilyNorm {
    double log_z, mean, var;
};

FamilyNorm family_norm(double tau, int L) {
    std::vector<double> lw(L + 1);
    double mx = kNegInf;
    for (int l = 0; l <= L; ++l) {
        lw[l] = l * tau - std::lgamma(l + 1.0);
        mx = std::max(mx, lw[l]);
    }
    double z = 0, m1 = 0, m2 = 0;
    for (int l = 0; l <= L; ++l) {
        const double w = std::exp(lw[l] - mx);
        z += w;
        m1 += w * l;
        m2 += w * l * l;
    }
    FamilyNorm f;
    f.log_z = mx + std::log(z);
    f.mean = m1 / z;
    f.var = std::max(0.0, m2 / z - f.mean * f.mean);
    return f;
}

VectorXd xstar(const VectorXd& x) {
    VectorXd s(x.size() + 1);
    s(0) = 1.0;
    s.tail(x.size()) = x;
    return s;
}

struct GroupStats {
    double n = 0;
    int count = 0;
    MatrixXd sxx, sxz, v;
};

std::vector<GroupStats> group_stats(const BranchingParams& b, const WeightedSample& s) {
    const int p = b.p;
    std::vector<GroupStats> st(b.spec.num_groups());
    for (auto& g : st) {
        g.sxx = MatrixXd::Zero(p, p);
        g.sxz = MatrixXd::Zero(p, p + 1);
        g.v = MatrixXd::Zero(p + 1, p + 1);
    }
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const auto& d = s.data[i];
        const double w = s.weights[i];
        if (d.recruits.empty()) continue;
        auto& g = st[b.spec.covariate_group(d.action)];
        const VectorXd xs = xstar(d.x);
        for (const auto& r : d.recruits) {
            g.n += w;
            g.count += 1;
            g.sxx.noalias() += w * r.x * r.x.transpose();
            g.sxz.noalias() += w * r.x * xs.transpose();
        }
        g.v.noalias() += (w * d.m()) * xs * xs.transpose();
    }
    return st;
}

/// Covariate block of one group in natural coordinates (general, possibly nonsymmetric Omega).
double group_loglik(const GroupStats& g, const MatrixXd& gamma, const MatrixXd& omega, int p, bool diagonal,
                    VectorXd* grad, MatrixXd* hess) {
    const int len = p * (p + 1) + (diagonal ? p : p * p);
    if (g.n == 0) {
        if (grad) grad->setZero(len);
        if (hess) hess->setZero(len, len);
        return 0.0;
    }
    const MatrixXd sym = -0.5 * (omega + omega.transpose());
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success) return kNegInf;
    Eigen::PartialPivLU<MatrixXd> lu(-2.0 * omega);
    const MatrixXd lu_m = lu.matrixLU();
    double logdet = 0.0;
    for (int k = 0; k < p; ++k) logdet += std::log(std::abs(lu_m(k, k)));
    const MatrixXd S = omega.inverse();
    const MatrixXd M = gamma * g.v * gamma.transpose();
    const double val = 0.5 * g.n * logdet + (omega.array() * g.sxx.array()).sum() +
                       (gamma.array() * g.sxz.array()).sum() + 0.25 * (S * M).trace() - 0.5 * g.n * p * kLog2Pi;
    const int ng = p * (p + 1);
    const int no = diagonal ? p : p * p;
    if (grad) {
        const MatrixXd St = S.transpose();
        const MatrixXd gG = g.sxz + 0.25 * (S + St) * gamma * g.v;
        const MatrixXd gO = 0.5 * g.n * St + g.sxx - 0.25 * St * M * St;
        grad->resize(ng + no);
        grad->head(ng) = Eigen::Map<const VectorXd>(gG.data(), ng);
        if (diagonal)
            grad->tail(no) = gO.diagonal();
        else
            grad->tail(no) = Eigen::Map<const VectorXd>(gO.data(), no);
    }
    if (hess) {
        hess->resize(ng + no, ng + no);
        const MatrixXd St = S.transpose();
        auto column = [&](const MatrixXd& F, const MatrixXd& E, int col) {
            const MatrixXd dS = -S * E * S;
            const MatrixXd dSt = dS.transpose();
            const MatrixXd dM = F * g.v * gamma.transpose() + gamma * g.v * F.transpose();
            const MatrixXd dG = 0.25 * (dS + dSt) * gamma * g.v + 0.25 * (S + St) * F * g.v;
            const MatrixXd dO = 0.5 * g.n * dSt - 0.25 * (dSt * M * St + St * dM * St + St * M * dSt);
            hess->col(col).head(ng) = Eigen::Map<const VectorXd>(dG.data(), ng);
            if (diagonal)
                hess->col(col).tail(no) = dO.diagonal();
            else
                hess->col(col).tail(no) = Eigen::Map<const VectorXd>(dO.data(), no);
        };
        const MatrixXd zG = MatrixXd::Zero(p, p + 1);
        const MatrixXd zO = MatrixXd::Zero(p, p);
        for (int c = 0; c < ng; ++c) {
            MatrixXd F = zG;
            F(c % p, c / p) = 1.0;
            column(F, zO, c);
        }
        for (int c = 0; c < no; ++c) {
            MatrixXd E = zO;
            if (diagonal)
                E(c, c) = 1.0;
            else
                E(c % p, c / p) = 1.0;
            column(zG, E, ng + c);
        }
        *hess = 0.5 * (*hess + hess->transpose());
    }
    return val;
}

}  // namespace

BranchingParams BranchingParams::initial(const ActionSpaceSpec& spec, int p, double t_min, double t_max,
                                         bool diagonal) {
    BranchingParams b;
    b.family = spec.family();
    b.spec = spec;
    b.p = p;
    b.t_min = t_min;
    b.t_max = t_max;
    b.diagonal = diagonal || b.family == ModelFamily::value_model;
    b.beta_y = VectorXd::Zero(reward_dim(spec.reward_design(), p));
    if (b.family == ModelFamily::type_model) {
        b.groups.resize(spec.num_groups());
        for (auto& g : b.groups) {
            g.phi = VectorXd::Zero(p);
            g.G = MatrixXd::Zero(p, p);
            g.sigma_chol = MatrixXd::Identity(p, p);
        }
    } else {
        b.phi0 = VectorXd::Zero(p);
        b.omega0 = VectorXd::Ones(p);
        b.omega1 = VectorXd::Zero(p);
    }
    return b;
}

void BranchingParams::validate() const {
    if (!(lambda > 0)) throw InvalidArgument("lambda must be positive");
    if (family == ModelFamily::type_model) {
        if (!(zeta > 0)) throw InvalidArgument("zeta must be positive");
        for (const auto& g : groups) {
            Eigen::LLT<MatrixXd> llt(g.sigma());
            if (llt.info() != Eigen::Success) throw InvalidArgument("group covariance must be positive definite");
        }
    } else {
        if (!(zeta0 > 0) || !(zeta0 + zeta1 > 0)) throw InvalidArgument("arrival rate must be positive on [0,1]");
        if ((omega0.array() <= 0).any() || ((omega0 + omega1).array() <= 0).any())
            throw InvalidArgument("precisions must be positive on [0,1]");
    }
}

FlatLayout flat_layout(const BranchingParams& b) {
    FlatLayout l;
    l.reward = 0;
    l.covariate = static_cast<int>(b.beta_y.size());
    if (b.family == ModelFamily::type_model) {
        l.arrival = l.covariate + static_cast<int>(b.groups.size()) * (b.p * (b.p + 1) + omega_len(b));
        l.family = l.arrival + 1;
    } else {
        l.arrival = l.covariate + 3 * b.p + 1;
        l.family = l.arrival + 2;
    }
    l.size = l.family + 1;
    return l;
}

VectorXd to_flat(const BranchingParams& b) {
    const FlatLayout l = flat_layout(b);
    VectorXd f(l.size);
    f.segment(l.reward, l.reward_len()) = b.beta_y;
    const int p = b.p;
    if (b.family == ModelFamily::type_model) {
        int off = l.covariate;
        for (const auto& g : b.groups) {
            MatrixXd gd(p, p + 1);
            gd.col(0) = g.phi;
            gd.rightCols(p) = g.G;
            const MatrixXd prec = g.sigma().inverse();
            const MatrixXd gamma = prec * gd;
            const MatrixXd omega = -0.5 * prec;
            f.segment(off, p * (p + 1)) = Eigen::Map<const VectorXd>(gamma.data(), p * (p + 1));
            off += p * (p + 1);
            if (b.diagonal) {
                f.segment(off, p) = omega.diagonal();
                off += p;
            } else {
                f.segment(off, p * p) = Eigen::Map<const VectorXd>(omega.data(), p * p);
                off += p * p;
            }
        }
        f(l.arrival) = b.zeta;
    } else {
        f.segment(l.covariate, p) = b.phi0;
        f(l.covariate + p) = b.phi1;
        f.segment(l.covariate + p + 1, p) = b.omega0;
        f.segment(l.covariate + 2 * p + 1, p) = b.omega1;
        f(l.arrival) = b.zeta0;
        f(l.arrival + 1) = b.zeta1;
    }
    f(l.family) = std::log(b.lambda);
    return f;
}

BranchingParams from_flat(const BranchingParams& shape, const VectorXd& f) {
    BranchingParams b = shape;
    const FlatLayout l = flat_layout(b);
    if (f.size() != l.size) throw InvalidArgument("flat vector has the wrong length");
    const int p = b.p;
    b.beta_y = f.segment(l.reward, l.reward_len());
    if (b.family == ModelFamily::type_model) {
        int off = l.covariate;
        for (auto& g : b.groups) {
            const MatrixXd gamma = Eigen::Map<const MatrixXd>(f.data() + off, p, p + 1);
            off += p * (p + 1);
            MatrixXd omega = MatrixXd::Zero(p, p);
            if (b.diagonal) {
                omega.diagonal() = f.segment(off, p);
                off += p;
            } else {
                omega = Eigen::Map<const MatrixXd>(f.data() + off, p, p);
                off += p * p;
            }
            omega = 0.5 * (omega + omega.transpose());
            Eigen::LLT<MatrixXd> prec(-2.0 * omega);
            if (prec.info() != Eigen::Success) throw InvalidArgument("Omega must be negative definite");
            MatrixXd sigma = prec.solve(MatrixXd::Identity(p, p));
            sigma = 0.5 * (sigma + sigma.transpose());
            const MatrixXd gd = sigma * gamma;
            g.phi = gd.col(0);
            g.G = gd.rightCols(p);
            if (b.diagonal) {
                g.sigma_chol = sigma.diagonal().cwiseSqrt().asDiagonal();
            } else {
                Eigen::LLT<MatrixXd> ch(sigma);
                g.sigma_chol = ch.matrixL();
            }
        }
        b.zeta = f(l.arrival);
    } else {
        b.phi0 = f.segment(l.covariate, p);
        b.phi1 = f(l.covariate + p);
        b.omega0 = f.segment(l.covariate + p + 1, p);
        b.omega1 = f.segment(l.covariate + 2 * p + 1, p);
        b.zeta0 = f(l.arrival);
        b.zeta1 = f(l.arrival + 1);
    }
    b.lambda = std::exp(f(l.family));
    return b;
}

std::vector<double> stabilizing_weights(const std::vector<double>& probs, const std::vector<int>& feasible_counts) {
    if (probs.size() != feasible_counts.size()) throw InvalidArgument("stabilizing_weights: size mismatch");
    std::vector<double> w(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0)) throw ContractViolation("zero selection probability under the realized policy");
        if (feasible_counts[i] < 1) throw ContractViolation("empty feasible set");
        w[i] = std::sqrt((1.0 / feasible_counts[i]) / probs[i]);
    }
    return w;
}

WeightedSample build_sample(const Trajectory& traj, double t_min, double t_max, SampleView view, bool stabilizing) {
    (void)t_min;
    WeightedSample s;
    if (traj.records.empty()) return s;
    const int n = traj.size();
    std::vector<std::vector<int>> children(n);
    for (int i = 0; i < n; ++i)
        if (traj.records[i].parent >= 0) children[traj.records[i].parent].push_back(i);
    int max_gen = std::numeric_limits<int>::max();
    if (view == SampleView::complete_epochs) max_gen = epoch_partition(traj, t_max).last_complete;  // E_0..E_{J-1}
    const double t_end = traj.end_time();
    for (int i = 0; i < n; ++i) {
        const auto& r = traj.records[i];
        if (r.action < 0) continue;
        if (view == SampleView::complete_epochs && r.generation >= max_gen) continue;
        RecruiterDatum d;
        d.x = r.x;
        d.action = r.action;
        d.L = r.coupons;
        d.record = i;
        d.selection_prob = r.selection_prob;
        d.feasible_count = r.feasible_count;
        d.family_observed = view == SampleView::complete_epochs || r.arrival_time + t_max < t_end;
        for (int c : children[i]) {
            const auto& ch = traj.records[c];
            d.recruits.push_back(Recruit{ch.x, ch.reward, ch.arrival_time - r.arrival_time});
        }
        if (d.recruits.empty() && !d.family_observed) continue;
        s.data.push_back(std::move(d));
    }
    if (stabilizing) {
        std::vector<double> probs;
        std::vector<int> counts;
        for (const auto& d : s.data) {
            probs.push_back(d.selection_prob);
            counts.push_back(d.feasible_count);
        }
        s.weights = stabilizing_weights(probs, counts);
    } else {
        s.weights.assign(s.data.size(), 1.0);
    }
    return s;
}

double family_logpmf(int m, double lambda, int L) {
    if (m < 0 || m > L) throw InvalidArgument("family_logpmf: need 0 <= m <= L");
    if (lambda < 0) throw InvalidArgument("family_logpmf: lambda must be >= 0");
    if (lambda == 0) return m == 0 ? 0.0 : kNegInf;
    const double tau = std::log(lambda);
    return m * tau - std::lgamma(m + 1.0) - family_norm(tau, L).log_z;
}

double mean_family_size(double lambda, int L) {
    if (lambda <= 0) return 0.0;
    return family_norm(std::log(lambda), L).mean;
}

double covariate_logpdf(const VectorXd& x_child, const VectorXd& x_parent, int action, const BranchingParams& b) {
    const int p = b.p;
    if (x_child.size() != p || x_parent.size() != p) throw InvalidArgument("covariate_logpdf: dimension mismatch");
    if (b.family == ModelFamily::type_model) {
        const auto& g = b.groups.at(b.spec.covariate_group(action));
        const VectorXd r = x_child - g.phi - g.G * x_parent;
        const MatrixXd& L = g.sigma_chol;
        for (int k = 0; k < p; ++k)
            if (!(L(k, k) > 0)) throw InvalidArgument("covariate_logpdf: covariance not positive definite");
        const VectorXd z = L.triangularView<Eigen::Lower>().solve(r);
        double logdet = 0.0;
        for (int k = 0; k < p; ++k) logdet += std::log(L(k, k));
        return -0.5 * z.squaredNorm() - logdet - 0.5 * p * kLog2Pi;
    }
    const double c = 1.0 - b.spec.value(action);
    double val = -0.5 * p * kLog2Pi;
    for (int k = 0; k < p; ++k) {
        const double w = b.omega0(k) + c * b.omega1(k);
        if (!(w > 0)) throw InvalidArgument("covariate_logpdf: precision not positive");
        const double r = x_child(k) - b.phi0(k) - b.phi1 * x_parent(k);
        val += 0.5 * std::log(w) - 0.5 * w * r * r;
    }
    return val;
}

double reward_logpmf(int y, const VectorXd& z, const VectorXd& beta_y) {
    const double eta = z.dot(beta_y);
    return y ? -log1pexp(-eta) : -log1pexp(eta);
}

double evaluate_flat(const BranchingParams& shape, const VectorXd& flat, const WeightedSample& s, VectorXd* grad,
                     MatrixXd* hess, unsigned blocks) {
    if (s.data.empty()) throw InvalidArgument("empty sample");
    if (s.weights.size() != s.data.size()) throw InvalidArgument("weights and data differ in length");
    const FlatLayout l = flat_layout(shape);
    if (flat.size() != l.size) throw InvalidArgument("flat vector has the wrong length");
    const int p = shape.p;
    const auto& spec = shape.spec;
    if (grad) grad->setZero(l.size);
    if (hess) hess->setZero(l.size, l.size);
    double total = 0.0;

    if (blocks & kReward) {
        const int r = l.reward_len();
        const VectorXd beta = flat.segment(l.reward, r);
        for (std::size_t i = 0; i < s.data.size(); ++i) {
            const auto& d = s.data[i];
            const double w = s.weights[i];
            for (const auto& rc : d.recruits) {
                const VectorXd z = reward_features(spec, rc.x, d.action);
                const double eta = z.dot(beta);
                total += w * (rc.y ? -log1pexp(-eta) : -log1pexp(eta));
                if (grad || hess) {
                    const double mu = logistic(eta);
                    if (grad) grad->segment(l.reward, r).noalias() += w * (rc.y - mu) * z;
                    if (hess) hess->block(l.reward, l.reward, r, r).noalias() -= w * mu * (1 - mu) * z * z.transpose();
                }
            }
        }
    }

    if (blocks & kCovariate) {
        if (shape.family == ModelFamily::type_model) {
            const auto stats = group_stats(shape, s);
            const int ng = p * (p + 1);
            const int no = omega_len(shape);
            int off = l.covariate;
            for (const auto& g : stats) {
                const MatrixXd gamma = Eigen::Map<const MatrixXd>(flat.data() + off, p, p + 1);
                MatrixXd omega = MatrixXd::Zero(p, p);
                if (shape.diagonal)
                    omega.diagonal() = flat.segment(off + ng, p);
                else
                    omega = Eigen::Map<const MatrixXd>(flat.data() + off + ng, p, p);
                VectorXd gg;
                MatrixXd hh;
                const double v = group_loglik(g, gamma, omega, p, shape.diagonal, grad ? &gg : nullptr,
                                              hess ? &hh : nullptr);
                if (!std::isfinite(v)) return kNegInf;
                total += v;
                if (grad) grad->segment(off, ng + no) = gg;
                if (hess) hess->block(off, off, ng + no, ng + no) = hh;
                off += ng + no;
            }
        } else {
            const int o = l.covariate;
            const VectorXd phi0 = flat.segment(o, p);
            const double phi1 = flat(o + p);
            const VectorXd om0 = flat.segment(o + p + 1, p);
            const VectorXd om1 = flat.segment(o + 2 * p + 1, p);
            if ((om0.array() <= 0).any() || ((om0 + om1).array() <= 0).any()) return kNegInf;
            for (std::size_t i = 0; i < s.data.size(); ++i) {
                const auto& d = s.data[i];
                const double wt = s.weights[i];
                const double c = 1.0 - spec.value(d.action);
                for (const auto& rc : d.recruits) {
                    total -= wt * 0.5 * p * kLog2Pi;
                    for (int k = 0; k < p; ++k) {
                        const double w = om0(k) + c * om1(k);
                        const double xp = d.x(k);
                        const double r = rc.x(k) - phi0(k) - phi1 * xp;
                        total += wt * (0.5 * std::log(w) - 0.5 * w * r * r);
                        if (grad) {
                            auto& G = *grad;
                            G(o + k) += wt * w * r;
                            G(o + p) += wt * w * r * xp;
                            const double dw = 0.5 / w - 0.5 * r * r;
                            G(o + p + 1 + k) += wt * dw;
                            G(o + 2 * p + 1 + k) += wt * c * dw;
                        }
                        if (hess) {
                            auto& H = *hess;
                            const int i0 = o + k, i1 = o + p, j0 = o + p + 1 + k, j1 = o + 2 * p + 1 + k;
                            const double iw2 = 0.5 / (w * w);
                            H(i0, i0) -= wt * w;
                            H(i0, i1) -= wt * w * xp;
                            H(i1, i0) -= wt * w * xp;
                            H(i1, i1) -= wt * w * xp * xp;
                            H(i0, j0) += wt * r;
                            H(j0, i0) += wt * r;
                            H(i0, j1) += wt * c * r;
                            H(j1, i0) += wt * c * r;
                            H(i1, j0) += wt * r * xp;
                            H(j0, i1) += wt * r * xp;
                            H(i1, j1) += wt * c * r * xp;
                            H(j1, i1) += wt * c * r * xp;
                            H(j0, j0) -= wt * iw2;
                            H(j0, j1) -= wt * c * iw2;
                            H(j1, j0) -= wt * c * iw2;
                            H(j1, j1) -= wt * c * c * iw2;
                        }
                    }
                }
            }
        }
    }

    if (blocks & kArrival) {
        const int o = l.arrival;
        if (shape.family == ModelFamily::type_model) {
            const double zeta = flat(o);
            if (!(zeta > 0)) return kNegInf;
            for (std::size_t i = 0; i < s.data.size(); ++i) {
                const auto& d = s.data[i];
                if (!d.family_observed) continue;
                for (const auto& rc : d.recruits) {
                    if (rc.u < shape.t_min || rc.u > shape.t_max) return kNegInf;
                    const TruncExpTerm t = truncexp_term(rc.u, zeta, shape.t_min, shape.t_max);
                    total += s.weights[i] * t.logpdf;
                    if (grad) (*grad)(o) += s.weights[i] * t.d1;
                    if (hess) (*hess)(o, o) += s.weights[i] * t.d2;
                }
            }
        } else {
            const double z0 = flat(o), z1 = flat(o + 1);
            if (!(z0 > 0) || !(z0 + z1 > 0)) return kNegInf;
            for (std::size_t i = 0; i < s.data.size(); ++i) {
                const auto& d = s.data[i];
                if (!d.family_observed) continue;
                const double a = spec.value(d.action);
                const double rate = z0 + z1 * a;
                for (const auto& rc : d.recruits) {
                    if (rc.u < shape.t_min || rc.u > shape.t_max) return kNegInf;
                    const TruncExpTerm t = truncexp_term(rc.u, rate, shape.t_min, shape.t_max);
                    const double w = s.weights[i];
                    total += w * t.logpdf;
                    if (grad) {
                        (*grad)(o) += w * t.d1;
                        (*grad)(o + 1) += w * a * t.d1;
                    }
                    if (hess) {
                        (*hess)(o, o) += w * t.d2;
                        (*hess)(o, o + 1) += w * a * t.d2;
                        (*hess)(o + 1, o) += w * a * t.d2;
                        (*hess)(o + 1, o + 1) += w * a * a * t.d2;
                    }
                }
            }
        }
    }

    if (blocks & kFamily) {
        const int o = l.family;
        const double tau = flat(o);
        if (!std::isfinite(tau)) return kNegInf;
        for (std::size_t i = 0; i < s.data.size(); ++i) {
            const auto& d = s.data[i];
            if (!d.family_observed) continue;
            const int m = d.m();
            if (m > d.L) throw InvalidArgument("family size exceeds the coupon allotment");
            const FamilyNorm fn = family_norm(tau, d.L);
            const double w = s.weights[i];
            total += w * (m * tau - std::lgamma(m + 1.0) - fn.log_z);
            if (grad) (*grad)(o) += w * (m - fn.mean);
            if (hess) (*hess)(o, o) -= w * fn.var;
        }
    }
    return total;
}

double loglik(const BranchingParams& b, const WeightedSample& s, unsigned blocks) {
    return evaluate_flat(b, to_flat(b), s, nullptr, nullptr, blocks);
}

VectorXd score(const BranchingParams& b, const WeightedSample& s, unsigned blocks) {
    VectorXd g;
    evaluate_flat(b, to_flat(b), s, &g, nullptr, blocks);
    return g;
}

MatrixXd hessian(const BranchingParams& b, const WeightedSample& s, unsigned blocks) {
    MatrixXd h;
    evaluate_flat(b, to_flat(b), s, nullptr, &h, blocks);
    return h;
}

VectorXd sample_child_covariates(const BranchingParams& b, const VectorXd& x_parent, int action, Rng& rng) {
    const int p = b.p;
    VectorXd e(p);
    for (int k = 0; k < p; ++k) e(k) = rng.normal();
    if (b.family == ModelFamily::type_model) {
        const auto& g = b.groups[b.spec.covariate_group(action)];
        return g.phi + g.G * x_parent + g.sigma_chol * e;
    }
    const double c = 1.0 - b.spec.value(action);
    VectorXd x(p);
    for (int k = 0; k < p; ++k)
        x(k) = b.phi0(k) + b.phi1 * x_parent(k) + e(k) / std::sqrt(b.omega0(k) + c * b.omega1(k));
    return x;
}

}  // namespace rlrds
