#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "ppopf/netmodel.hpp"

namespace ppopf::sdpform {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using net::Complex;
using net::MatrixXcd;

/// Slot bookkeeping for the block variable vector
///   x = [x1 (P_G, d pairs), x2 (Q_G, d), x3 (u_g, l_g), x4 (u_r, l_r),
///        x5 (voltages, real-embedded), x6 (u_b, l_b)].
struct VariableLayout {
    int n_gen = 0; // generators in the region (home generators)
    int n_bus = 0; // |B_r|

    int x1_offset() const { return 0; }
    int x2_offset() const { return 2 * n_gen; }
    int x3_offset() const { return 4 * n_gen; }
    int x4_offset() const { return 6 * n_gen; }
    int x5_offset() const { return 8 * n_gen; }
    int x6_offset() const { return 8 * n_gen + 2 * n_bus; }
    int dimension() const { return 8 * n_gen + 4 * n_bus; }

    // g indexes home generators, b indexes buses locally within B_r
    int pg(int g) const { return x1_offset() + 2 * g; }
    int dg_p(int g) const { return x1_offset() + 2 * g + 1; }
    int qg(int g) const { return x2_offset() + 2 * g; }
    int dg_q(int g) const { return x2_offset() + 2 * g + 1; }
    int ug(int g) const { return x3_offset() + 2 * g; }
    int lg(int g) const { return x3_offset() + 2 * g + 1; }
    int ur(int g) const { return x4_offset() + 2 * g; }
    int lr(int g) const { return x4_offset() + 2 * g + 1; }
    int v_re(int b) const { return x5_offset() + b; }
    int v_im(int b) const { return x5_offset() + n_bus + b; }
    int ub(int b) const { return x6_offset() + 2 * b; }
    int lb(int b) const { return x6_offset() + 2 * b + 1; }
};

/// Real embedding of a Hermitian matrix W = X + jZ as [[X, -Z], [Z, X]].
/// W is PSD iff the embedding is PSD.
MatrixXd embed_real(const MatrixXd& X, const MatrixXd& Z);
MatrixXd embed_hermitian(const MatrixXcd& W);
/// Coefficient-side embedding: Tr{embed_coeff(C) * embed_hermitian(W)} = Tr{C W}
/// for Hermitian C, W.
MatrixXd embed_coeff(const MatrixXcd& C);
/// Inverse of embed_hermitian, valid for any real symmetric S:
/// X = (S11 + S22)/2, Z = (S21 - S12)/2.
void unembed(const MatrixXd& S, MatrixXd& X, MatrixXd& Z);
bool check_psd_embedding(const MatrixXd& X, const MatrixXd& Z, double floor = -1e-9);

/// Entrywise subgradient signs for one neighbour's boundary blocks.
/// Diagonal and upper-triangle slots of the X block, upper triangle of Z
/// (each distinct entry of the consensus gap appears once in the objective).
struct BoundarySigns {
    Eigen::MatrixXi x_signs; // |shared| x |shared|, only i<=j slots used
    Eigen::MatrixXi z_signs; // only i<j slots used
};

struct NeighborCoupling {
    int neighbor = 0;
    MatrixXd gamma;  // symmetric dual block over shared buses
    MatrixXd lambda; // skew-symmetric dual block
    BoundarySigns signs;
};

/// min Tr(A0^T X) s.t. Tr(Am^T X) = b_m, X >= 0 over the block variable.
struct SdpStandardForm {
    MatrixXd A0;
    std::vector<MatrixXd> A;
    VectorXd b;
    VariableLayout layout;
    std::vector<std::string> constraint_names;
};

/// Everything needed to assemble and refresh the per-region form.
class RegionForm {
public:
    RegionForm(const net::PowerNetwork& net, const net::RegionPartition& part, int region);

    const VariableLayout& layout() const { return layout_; }
    int region() const { return region_; }
    int shared_size(int neighbor) const;

    /// Constraint side (A_m, b): power balance for home buses, voltage boxes
    /// over B_r, generator boxes, d-normalizations. Fixed across iterations.
    void build_constraints(SdpStandardForm& form) const;

    /// Objective A0 for the given duals and signs; alpha weights the consensus
    /// penalty. Returns a fresh matrix (copy-on-refresh).
    MatrixXd build_objective(const std::vector<NeighborCoupling>& couplings, double alpha) const;

    /// Additive constant dropped from A0 (terms independent of the region
    /// variable): -Tr(Gamma^T Xc) - Tr(Lambda^T Zc) - alpha * sum sign*const.
    double objective_constant(const std::vector<NeighborCoupling>& couplings,
                              const std::map<int, MatrixXd>& x_constants,
                              const std::map<int, MatrixXd>& z_constants, double alpha) const;

    SdpStandardForm build(const std::vector<NeighborCoupling>& couplings, double alpha) const;

    /// Home generators of the region (indices into net.generators()).
    const std::vector<int>& home_generators() const { return home_gens_; }

    const net::PowerNetwork& network() const { return net_; }
    const net::RegionPartition& partitioning() const { return part_; }

private:
    MatrixXcd restricted(const MatrixXcd& global) const;

    net::PowerNetwork net_;
    net::RegionPartition part_;
    int region_;
    VariableLayout layout_;
    std::vector<int> home_gens_;
    std::vector<int> bus_idx_; // dense network indices of B_r
    net::AdmittanceOperators ops_;
};

struct RegionSolution {
    VectorXd P_G, Q_G; // per home generator
    MatrixXd Xr, Zr;   // voltage block, |B_r| x |B_r|
    double rank1_residual = 0.0;
    double d_slot_error = 0.0; // max |d^2 - 1| over normalization slots
    double cost = 0.0;         // sum a P^2 + b P + c over home generators
    bool extraction_warning = false;
};

RegionSolution extract_solution(const RegionForm& form, const MatrixXd& X);

/// Sparse triplet dump of the constraint system for offline cross-checks.
void dump_triplets(const SdpStandardForm& form, std::ostream& os);

} // namespace ppopf::sdpform
