#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "ppopf/phe.hpp"
#include "ppopf/sdpform.hpp"
#include "ppopf/sdpsolve.hpp"

namespace ppopf::admm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct AdmmConfig {
    double alpha = 0.48;   // consensus weight in the primal objective
    double epsilon = 1e-6; // outer stopping threshold on the residual
    int penalty_min = 100; // random multiplicative factors drawn uniformly
    int penalty_max = 200; // from [penalty_min, penalty_max]
    int max_outer = 200;
    int max_inner = 300;
    phe::FixedPointCodec codec;
    std::uint64_t master_seed = 1;
    int key_bits = 512;
    int key_rotate_every = 1; // fresh keypair every K outer iterations
    bool gauss_seidel = false; // bounded-staleness sweep instead of synchronous
    sdpsolve::SolverOptions solver;
    enum class InnerStop { consensus_or_stationary, consensus_only };
    InnerStop inner_stop = InnerStop::consensus_or_stationary;
};

/// Deterministic penalty/blind factor draws, keyed so that every party (and
/// the plaintext twin) derives identical values without shared state.
struct PenaltyDraws {
    std::uint64_t master_seed;
    int lo, hi;

    int factor(char kind, int from, int to, int t, int k = -1) const;
    int a(int from, int to, int t) const { return factor('a', from, to, t); }
    int b(int from, int to, int t) const { return factor('b', from, to, t); }
    int c(int from, int to, int t, int k) const { return factor('c', from, to, t, k); }
    int d(int from, int to, int t, int k) const { return factor('d', from, to, t, k); }
};

struct RegionState {
    MatrixXd X, Z; // voltage block over B_r
    VectorXd P_G, Q_G;
    double cost = 0.0;
    double rank1_residual = 0.0;
    double feasibility_gap = 0.0; // worst constraint violation at exit
    int inner_iterations = 0;
    bool inner_consensus = false; // operator reported all-zero differences
    bool inner_flagged = false;   // hit the inner cap or a numerical failure
    int outer_iter = 0;
};

struct DualState {
    std::map<int, MatrixXd> gamma;  // symmetric, per neighbor
    std::map<int, MatrixXd> lambda; // skew-symmetric, per neighbor
};

/// Quantized boundary message (values on the codec grid).
struct BoundarySnapshot {
    MatrixXd X, Z;
};

/// Exchange surface between the ADMM driver and the communication layer.
/// The plaintext stub and the encrypted protocol implement the same calls;
/// twin runs differ only in transport.
class BoundaryFeed {
public:
    virtual ~BoundaryFeed() = default;

    struct SignReport {
        sdpform::BoundarySigns signs;
        bool all_zero = false; // every weighted difference decoded to zero
    };
    /// One primal-update exchange for ordered pair (r, l) at inner step k.
    virtual SignReport primal_signs(int r, int l, int t, int k, const MatrixXd& x_block,
                                    const MatrixXd& z_block) = 0;

    /// One dual-update exchange: the values agent r receives from l, i.e.
    /// a_{l->r} (X^l - X^r) and b_{l->r} (Z^l - Z^r), decoded to reals.
    struct ReceivedDualDiff {
        MatrixXd x_weighted, z_weighted;
    };
    virtual ReceivedDualDiff dual_exchange(int r, int l, int t, const MatrixXd& x_block,
                                           const MatrixXd& z_block) = 0;

    /// Publish r's fresh boundary blocks at the end of outer round t.
    virtual void publish(int r, int t, const std::map<int, BoundarySnapshot>& blocks) = 0;
    /// The message sent from `from` to `to` at round t (what `to` would see).
    virtual BoundarySnapshot published_message(int from, int to, int t) = 0;

    virtual void begin_outer(int t) { (void)t; }
};

/// Plaintext exchange that quantizes every boundary value through the codec,
/// so the encrypted pipeline and this stub produce identical numbers.
/// An optional additive-noise hook supports the differential-privacy baseline.
class PlaintextFeed : public BoundaryFeed {
public:
    PlaintextFeed(const net::RegionPartition& part, const AdmmConfig& config);

    SignReport primal_signs(int r, int l, int t, int k, const MatrixXd& x_block,
                            const MatrixXd& z_block) override;
    ReceivedDualDiff dual_exchange(int r, int l, int t, const MatrixXd& x_block,
                                   const MatrixXd& z_block) override;
    void publish(int r, int t, const std::map<int, BoundarySnapshot>& blocks) override;
    BoundarySnapshot published_message(int from, int to, int t) override;

    /// Noise bound for messages published at round t; zero disables noise.
    virtual double noise_bound(int t) const { return 0.0; }

protected:
    net::RegionPartition part_;
    AdmmConfig config_;
    PenaltyDraws draws_;
    // message store: (from, to, t) -> snapshot on the codec grid
    std::map<std::tuple<int, int, int>, BoundarySnapshot> messages_;
};

/// Entrywise subgradient signs of |A - C| (+1 / -1 / 0 on ties).
Eigen::MatrixXi subgradient_signs_plain(const MatrixXd& iterate_block,
                                        const MatrixXd& constant_block);

/// Gamma/Lambda update from the received weighted differences; the receiver
/// scales by its own factors and flips the orientation.
void dual_update(DualState& duals, int neighbor, int a_own, int b_own,
                 const BoundaryFeed::ReceivedDualDiff& received);

/// Consensus residual of region r from the published messages.
double residual(BoundaryFeed& feed, const net::RegionPartition& part, int r, int t);
bool converged(const std::vector<double>& psi, double epsilon);

struct TraceRow {
    int t = 0;
    double psi_max = 0.0;
    double total_cost = 0.0;
    std::vector<double> region_cost;
};

struct AdmmResult {
    bool converged = false;
    int outer_iterations = 0;
    double psi_max_final = 0.0;
    double total_cost = 0.0;
    std::vector<RegionState> states;
    std::vector<DualState> duals;
    std::vector<TraceRow> trace;
    double worst_rank1_residual = 0.0;
    double worst_feasibility_gap = 0.0;
    long long total_inner_iterations = 0;
};

class AdmmDriver {
public:
    AdmmDriver(const net::PowerNetwork& net, const net::RegionPartition& part,
               const AdmmConfig& config);

    /// Inner (S1) update for one region: iterate the interior-point scheme,
    /// refreshing the consensus signs through the feed at every step.
    RegionState primal_update(int r, const DualState& duals, BoundaryFeed& feed, int t) const;

    /// Full run: alternate S1/S2 until the residual criterion or max_outer.
    AdmmResult run(BoundaryFeed& feed) const;

    const sdpform::RegionForm& region_form(int r) const { return *forms_[r]; }
    const AdmmConfig& config() const { return config_; }
    const net::RegionPartition& partitioning() const { return part_; }

private:
    std::map<int, BoundarySnapshot> boundary_blocks(int r, const MatrixXd& X,
                                                    const MatrixXd& Z) const;

    net::PowerNetwork net_;
    net::RegionPartition part_;
    AdmmConfig config_;
    std::vector<std::unique_ptr<sdpform::RegionForm>> forms_;
};

} // namespace ppopf::admm
