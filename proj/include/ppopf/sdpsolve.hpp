#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "ppopf/sdpform.hpp"

namespace ppopf::sdpsolve {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using sdpform::SdpStandardForm;

enum class SolveStatus { optimal, max_iters, numerical_failure };

struct SdpIterate {
    MatrixXd X;       // primal, symmetric PD while iterating
    VectorXd y;       // dual vector
    MatrixXd Z;       // dual slack A0 - sum y_m A_m, symmetric PD
    double mu_barrier = 0.0;
    double beta = 0.3;
};

struct SolveReport {
    double objective = 0.0;
    int iterations = 0;
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0;
    double duality_gap = 0.0;
    SolveStatus status = SolveStatus::numerical_failure;
};

struct SolverOptions {
    double tol = 1e-8;
    int max_iters = 200;
    double beta = 0.1;           // centering weight
    double step_fraction = 0.95; // fraction-to-boundary
    std::string trace_csv;       // per-iteration trace when non-empty
};

/// Interior-point stepper over the standard form. The objective may be
/// refreshed between steps (the constraint side is fixed at construction).
class InteriorPointStepper {
public:
    InteriorPointStepper(const SdpStandardForm& form, const SolverOptions& opts);

    void set_objective(const MatrixXd& A0);
    /// Replaces the iterate; both matrices must be strictly positive definite.
    void set_state(const SdpIterate& it);
    /// One primal-dual step; returns false on numerical failure.
    bool step();
    bool converged() const;

    const MatrixXd& primal() const { return V_; }
    SdpIterate iterate() const;
    SolveReport report() const;
    int iterations_done() const { return iters_; }

    double primal_infeasibility() const;
    double dual_infeasibility() const;
    double duality_gap() const;

private:
    void restore_primal_feasibility();

    const SdpStandardForm* form_;
    SolverOptions opts_;
    MatrixXd A0n_; // negated objective, the scheme's data matrix
    std::vector<MatrixXd> A_; // Frobenius-normalized constraints
    VectorXd b_;
    VectorXd scale_;
    int D_ = 0;
    int M_ = 0;
    // scheme state: S_ is the slack-side matrix, V_ the primal-side matrix
    MatrixXd S_, V_;
    VectorXd y_;
    MatrixXd gram_;
    Eigen::LDLT<MatrixXd> gram_ldlt_;
    int iters_ = 0;
    bool failed_ = false;
};

/// Full solve; `warm` is used as the starting iterate when it is strictly
/// positive definite and dimensionally consistent.
std::pair<SdpIterate, SolveReport> solve(const SdpStandardForm& form,
                                         const std::optional<SdpIterate>& warm,
                                         const SolverOptions& opts = {});

double dual_objective(const SdpStandardForm& form, const VectorXd& y);
/// min-eig(A0 - sum y_m A_m); nonnegative iff y is dual feasible.
double dual_feasibility(const SdpStandardForm& form, const VectorXd& y);

} // namespace ppopf::sdpsolve
