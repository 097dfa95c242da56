#include "ppopf/sdpsolve.hpp"
#include <cstdlib>
#include <cstdio>

#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ppopf/common.hpp"

namespace ppopf::sdpsolve {

namespace {

// Largest step in (0, 1] keeping M + a*dM positive definite, times eta.
double max_step(const MatrixXd& M, const MatrixXd& dM, double eta) {
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        return 0.0;
    MatrixXd L = llt.matrixL();
    MatrixXd W = L.triangularView<Eigen::Lower>().solve(dM);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose()).transpose();
    W = 0.5 * (W + W.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(W, Eigen::EigenvaluesOnly);
    double lmin = eig.eigenvalues().minCoeff();
    if (lmin >= 0)
        return 1.0;
    return std::min(1.0, -eta / lmin);
}

bool is_pd(const MatrixXd& M) {
    Eigen::LLT<MatrixXd> llt(M);
    return llt.info() == Eigen::Success;
}

} // namespace

InteriorPointStepper::InteriorPointStepper(const SdpStandardForm& form, const SolverOptions& opts)
    : form_(&form), opts_(opts) {
    D_ = form.layout.dimension();
    if (D_ != form.A0.rows())
        D_ = static_cast<int>(form.A0.rows()); // forms built outside RegionForm
    M_ = static_cast<int>(form.A.size());
    if (D_ < 1 || M_ < 1)
        throw ContractError("solver: need D >= 1 and M >= 1");
    if (opts_.tol <= 0)
        throw ContractError("solver: tol must be positive");
    A0n_ = -form.A0;
    // Frobenius normalization of each constraint; residuals and tolerances
    // are then relative to the constraint scale.
    A_.resize(M_);
    b_.resize(M_);
    scale_.resize(M_);
    for (int m = 0; m < M_; ++m) {
        double s = form.A[m].norm();
        if (s <= 0)
            throw ContractError("solver: constraint " + std::to_string(m) + " has zero matrix");
        scale_(m) = s;
        A_[m] = form.A[m] / s;
        b_(m) = form.b(m) / s;
    }
    double tau = 1.0 + b_.cwiseAbs().maxCoeff();
    S_ = MatrixXd::Identity(D_, D_) * tau;
    V_ = MatrixXd::Identity(D_, D_) * tau;
    y_ = VectorXd::Zero(M_);
    // Gram matrix of the constraint basis, used to project roundoff out of
    // the primal residual after each step. Constant across iterations.
    MatrixXd G(M_, M_);
    for (int m = 0; m < M_; ++m)
        for (int n = m; n < M_; ++n) {
            G(m, n) = (A_[m].transpose() * A_[n]).trace();
            G(n, m) = G(m, n);
        }
    gram_ = G;
    gram_ldlt_.compute(G);
}

void InteriorPointStepper::restore_primal_feasibility() {
    if (gram_ldlt_.info() != Eigen::Success)
        return;
    VectorXd d(M_);
    for (int m = 0; m < M_; ++m)
        d(m) = b_(m) - (A_[m].transpose() * V_).trace();
    if (d.cwiseAbs().maxCoeff() < 1e-14)
        return;
    VectorXd c = gram_ldlt_.solve(d);
    if (!c.allFinite())
        return;
    MatrixXd corr = MatrixXd::Zero(D_, D_);
    for (int m = 0; m < M_; ++m)
        corr += c(m) * A_[m];
    corr = 0.5 * (corr + corr.transpose()).eval();
    for (double t = 1.0; t >= 1.0 / 64.0; t *= 0.5) {
        MatrixXd corrected = V_ + t * corr;
        if (is_pd(corrected)) {
            V_ = corrected;
            return;
        }
    }
}

void InteriorPointStepper::set_objective(const MatrixXd& A0) {
    if (A0.rows() != D_ || A0.cols() != D_)
        throw ContractError("set_objective: dimension mismatch");
    A0n_ = -A0;
}

void InteriorPointStepper::set_state(const SdpIterate& it) {
    if (it.X.rows() != D_ || it.Z.rows() != D_ || it.y.size() != M_)
        throw ContractError("set_state: dimension mismatch");
    if (!is_pd(it.X) || !is_pd(it.Z))
        throw ContractError("set_state: iterate is not strictly positive definite");
    V_ = it.X;
    S_ = it.Z;
    y_ = -it.y.cwiseProduct(scale_);
    failed_ = false;
}

double InteriorPointStepper::primal_infeasibility() const {
    double worst = 0.0;
    for (int m = 0; m < M_; ++m)
        worst = std::max(worst, std::abs(b_(m) - (A_[m].transpose() * V_).trace()));
    return worst;
}

double InteriorPointStepper::dual_infeasibility() const {
    MatrixXd P = -A0n_ - S_;
    for (int m = 0; m < M_; ++m)
        P += A_[m] * y_(m);
    return P.cwiseAbs().maxCoeff();
}

double InteriorPointStepper::duality_gap() const {
    return (S_.transpose() * V_).trace() / static_cast<double>(D_);
}

bool InteriorPointStepper::converged() const {
    if (failed_)
        return false;
    return primal_infeasibility() <= opts_.tol && dual_infeasibility() <= opts_.tol &&
           duality_gap() <= opts_.tol;
}

bool InteriorPointStepper::step() {
    if (failed_)
        return false;
    const double mu = duality_gap();
    // barrier target floored below the tolerance so the Schur system does not
    // enter the severely ill-conditioned regime past convergence
    const double mu_target = std::max(mu, 0.05 * opts_.tol);
    MatrixXd R = opts_.beta * mu_target * MatrixXd::Identity(D_, D_) - S_ * V_;
    MatrixXd P = -A0n_ - S_;
    for (int m = 0; m < M_; ++m)
        P += A_[m] * y_(m);

    Eigen::LLT<MatrixXd> sllt(S_);
    if (sllt.info() != Eigen::Success) {
        failed_ = true;
        return false;
    }
    auto s_solve = [&](const MatrixXd& rhs) { return sllt.solve(rhs).eval(); };

    // Schur system for the dual step
    std::vector<MatrixXd> SinvA(M_);
    for (int m = 0; m < M_; ++m)
        SinvA[m] = s_solve(A_[m]);
    MatrixXd B(M_, M_);
    VectorXd r(M_);
    MatrixXd core = s_solve(R - P * V_);
    for (int m = 0; m < M_; ++m) {
        double d_m = b_(m) - (A_[m].transpose() * V_).trace();
        r(m) = -d_m + (A_[m].transpose() * core).trace();
        for (int n = 0; n < M_; ++n)
            B(m, n) = ((SinvA[m] * V_).transpose() * A_[n]).trace();
    }
    MatrixXd Bs = 0.5 * (B + B.transpose());
    VectorXd dy;
    {
        Eigen::LDLT<MatrixXd> ldlt(Bs);
        dy = ldlt.solve(r);
        if (ldlt.info() != Eigen::Success || !dy.allFinite()) {
            // regularized retry
            double reg = 1e-12 * (1.0 + Bs.diagonal().cwiseAbs().maxCoeff());
            Bs += reg * MatrixXd::Identity(M_, M_);
            Eigen::LDLT<MatrixXd> retry(Bs);
            dy = retry.solve(r);
            if (retry.info() != Eigen::Success || !dy.allFinite()) {
                failed_ = true;
                return false;
            }
        }
        // two rounds of iterative refinement against the unsymmetrized system
        for (int round = 0; round < 2; ++round) {
            VectorXd resid = r - B * dy;
            VectorXd fix = ldlt.solve(resid);
            if (fix.allFinite())
                dy += fix;
        }
    }

    MatrixXd dS = P;
    for (int m = 0; m < M_; ++m)
        dS += A_[m] * dy(m);
    // dS*V ordering matches the Schur system above; the symmetrized step then
    // satisfies Tr(A_m dV) = d_m exactly, so feasibility contracts every step.
    MatrixXd dVhat = s_solve(R - dS * V_);
    MatrixXd dV = 0.5 * (dVhat + dVhat.transpose());

    double alpha_s = max_step(S_, dS, opts_.step_fraction);
    double alpha_v = max_step(V_, dV, opts_.step_fraction);
    if (std::getenv("PPOPF_DEBUG_STEPS"))
        std::fprintf(stderr, "k=%d alpha_s=%.3g alpha_v=%.3g |dS|=%.3g |dV|=%.3g\n", iters_,
                     alpha_s, alpha_v, dS.norm(), dV.norm());
    if (alpha_s <= 0 || alpha_v <= 0) {
        failed_ = true;
        return false;
    }
    // guard against roundoff at the boundary: shrink until PD holds
    for (int tries = 0; tries < 40; ++tries) {
        if (is_pd(S_ + alpha_s * dS))
            break;
        alpha_s *= 0.5;
    }
    for (int tries = 0; tries < 40; ++tries) {
        if (is_pd(V_ + alpha_v * dV))
            break;
        alpha_v *= 0.5;
    }
    S_ += alpha_s * dS;
    y_ += alpha_s * dy;
    V_ += alpha_v * dV;
    S_ = 0.5 * (S_ + S_.transpose()).eval();
    V_ = 0.5 * (V_ + V_.transpose()).eval();
    restore_primal_feasibility();
    ++iters_;
    return true;
}

SdpIterate InteriorPointStepper::iterate() const {
    SdpIterate it;
    it.X = V_;
    it.y = (-y_).cwiseQuotient(scale_);
    it.Z = S_;
    it.mu_barrier = duality_gap();
    it.beta = opts_.beta;
    return it;
}

SolveReport InteriorPointStepper::report() const {
    SolveReport rep;
    rep.objective = (-A0n_.transpose() * V_).trace();
    rep.iterations = iters_;
    rep.primal_infeasibility = primal_infeasibility();
    rep.dual_infeasibility = dual_infeasibility();
    rep.duality_gap = duality_gap();
    if (failed_)
        rep.status = SolveStatus::numerical_failure;
    else if (converged())
        rep.status = SolveStatus::optimal;
    else
        rep.status = SolveStatus::max_iters;
    return rep;
}

std::pair<SdpIterate, SolveReport> solve(const SdpStandardForm& form,
                                         const std::optional<SdpIterate>& warm,
                                         const SolverOptions& opts) {
    InteriorPointStepper stepper(form, opts);
    if (warm && warm->X.rows() == form.A0.rows() && warm->Z.rows() == form.A0.rows() &&
        warm->y.size() == static_cast<Eigen::Index>(form.A.size()) && is_pd(warm->X) &&
        is_pd(warm->Z))
        stepper.set_state(*warm);
    std::ofstream trace;
    if (!opts.trace_csv.empty()) {
        trace.open(opts.trace_csv);
        trace << "iter,mu,primal_inf,dual_inf\n";
    }
    auto metric = [&stepper] {
        return std::max({stepper.primal_infeasibility(), stepper.dual_infeasibility(),
                         stepper.duality_gap()});
    };
    SdpIterate best_it = stepper.iterate();
    SolveReport best_rep = stepper.report();
    double best_m = metric();
    int since_best = 0;
    for (int k = 0; k < opts.max_iters; ++k) {
        if (stepper.converged())
            break;
        if (!stepper.step())
            break;
        if (trace.is_open())
            trace << stepper.iterations_done() << "," << format_sig(stepper.duality_gap()) << ","
                  << format_sig(stepper.primal_infeasibility()) << ","
                  << format_sig(stepper.dual_infeasibility()) << "\n";
        double m = metric();
        if (m < best_m) {
            best_m = m;
            best_it = stepper.iterate();
            best_rep = stepper.report();
            since_best = 0;
        } else if (++since_best >= 30) {
            break; // stalled
        }
    }
    SolveReport rep = stepper.report();
    SdpIterate it = stepper.iterate();
    if (rep.status != SolveStatus::optimal && best_m < metric()) {
        it = best_it;
        rep = best_rep;
    }
    if (std::max({rep.primal_infeasibility, rep.dual_infeasibility, rep.duality_gap}) <= opts.tol)
        rep.status = SolveStatus::optimal;
    rep.iterations = stepper.iterations_done();
    return {it, rep};
}

double dual_objective(const SdpStandardForm& form, const VectorXd& y) {
    return form.b.dot(y);
}

double dual_feasibility(const SdpStandardForm& form, const VectorXd& y) {
    MatrixXd S = form.A0;
    for (size_t m = 0; m < form.A.size(); ++m)
        S -= form.A[m] * y(static_cast<Eigen::Index>(m));
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

} // namespace ppopf::sdpsolve
