#include "ppopf/admm.hpp"

#include <algorithm>
#include <cmath>

namespace ppopf::admm {

namespace {

using MatrixXi64 = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

MatrixXi64 quantize(const phe::FixedPointCodec& codec, const MatrixXd& m) {
    MatrixXi64 out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out(i, j) = codec.encode(m(i, j));
    return out;
}

MatrixXd dequantize(const phe::FixedPointCodec& codec, const MatrixXi64& m) {
    MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out(i, j) = codec.decode(m(i, j));
    return out;
}

int sign_of(std::int64_t v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

double hash_uniform(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53; // [0, 1)
}

} // namespace

int PenaltyDraws::factor(char kind, int from, int to, int t, int k) const {
    std::uint64_t h = derive_seed(master_seed, "penalty-factor",
                                  {static_cast<std::uint64_t>(kind),
                                   static_cast<std::uint64_t>(from),
                                   static_cast<std::uint64_t>(to),
                                   static_cast<std::uint64_t>(t),
                                   static_cast<std::uint64_t>(k + 1)});
    const int span = hi - lo + 1;
    return lo + static_cast<int>(h % static_cast<std::uint64_t>(span));
}

PlaintextFeed::PlaintextFeed(const net::RegionPartition& part, const AdmmConfig& config)
    : part_(part), config_(config),
      draws_{config.master_seed, config.penalty_min, config.penalty_max} {}

BoundaryFeed::SignReport PlaintextFeed::primal_signs(int r, int l, int t, int k,
                                                     const MatrixXd& x_block,
                                                     const MatrixXd& z_block) {
    const int s = static_cast<int>(part_.shared_buses(r, l).size());
    BoundarySnapshot constant;
    // sync: neighbour message from the previous round; staleness-1 sweep may
    // see this round's message when the neighbour already published
    auto pick_constant = [&]() -> BoundarySnapshot {
        if (config_.gauss_seidel) {
            auto it = messages_.find({l, r, t});
            if (it != messages_.end())
                return it->second;
        }
        auto it = messages_.find({l, r, t - 1});
        if (it != messages_.end())
            return it->second;
        // flat start
        return BoundarySnapshot{MatrixXd::Identity(s, s), MatrixXd::Zero(s, s)};
    };
    constant = pick_constant();

    MatrixXi64 zx = quantize(config_.codec, x_block);
    MatrixXi64 zz = quantize(config_.codec, z_block);
    MatrixXi64 cx = quantize(config_.codec, constant.X);
    MatrixXi64 cz = quantize(config_.codec, constant.Z);

    const std::int64_t c = draws_.c(l, r, t, k);
    const std::int64_t d = draws_.d(l, r, t, k);
    SignReport rep;
    rep.signs.x_signs.resize(s, s);
    rep.signs.z_signs.resize(s, s);
    rep.all_zero = true;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            std::int64_t wx = c * (zx(i, j) - cx(i, j));
            std::int64_t wz = d * (zz(i, j) - cz(i, j));
            rep.signs.x_signs(i, j) = sign_of(wx);
            rep.signs.z_signs(i, j) = sign_of(wz);
            if (wx != 0 || (i != j && wz != 0))
                rep.all_zero = false;
        }
    return rep;
}

BoundaryFeed::ReceivedDualDiff PlaintextFeed::dual_exchange(int r, int l, int t,
                                                            const MatrixXd& x_block,
                                                            const MatrixXd& z_block) {
    auto it = messages_.find({l, r, t});
    if (it == messages_.end())
        throw ContractError("dual_exchange: neighbour has not published round " +
                            std::to_string(t));
    MatrixXi64 mx = quantize(config_.codec, it->second.X);
    MatrixXi64 mz = quantize(config_.codec, it->second.Z);
    MatrixXi64 zx = quantize(config_.codec, x_block);
    MatrixXi64 zz = quantize(config_.codec, z_block);
    const std::int64_t a_in = draws_.a(l, r, t);
    const std::int64_t b_in = draws_.b(l, r, t);
    ReceivedDualDiff rd;
    rd.x_weighted.resize(mx.rows(), mx.cols());
    rd.z_weighted.resize(mz.rows(), mz.cols());
    for (Eigen::Index i = 0; i < mx.rows(); ++i)
        for (Eigen::Index j = 0; j < mx.cols(); ++j) {
            rd.x_weighted(i, j) = config_.codec.decode(a_in * (mx(i, j) - zx(i, j)));
            rd.z_weighted(i, j) = config_.codec.decode(b_in * (mz(i, j) - zz(i, j)));
        }
    return rd;
}

void PlaintextFeed::publish(int r, int t, const std::map<int, BoundarySnapshot>& blocks) {
    for (const auto& [l, snap] : blocks) {
        BoundarySnapshot msg = snap;
        const double bound = noise_bound(t);
        if (bound > 0.0) {
            const int s = static_cast<int>(msg.X.rows());
            for (int i = 0; i < s; ++i)
                for (int j = i; j < s; ++j) {
                    double nx = bound * (2.0 * hash_uniform(derive_seed(
                                                   config_.master_seed, "dp-noise-x",
                                                   {static_cast<std::uint64_t>(r),
                                                    static_cast<std::uint64_t>(l),
                                                    static_cast<std::uint64_t>(t),
                                                    static_cast<std::uint64_t>(i),
                                                    static_cast<std::uint64_t>(j)})) -
                                         1.0);
                    msg.X(i, j) += nx;
                    if (i != j)
                        msg.X(j, i) += nx;
                    if (i != j) {
                        double nz = bound * (2.0 * hash_uniform(derive_seed(
                                                       config_.master_seed, "dp-noise-z",
                                                       {static_cast<std::uint64_t>(r),
                                                        static_cast<std::uint64_t>(l),
                                                        static_cast<std::uint64_t>(t),
                                                        static_cast<std::uint64_t>(i),
                                                        static_cast<std::uint64_t>(j)})) -
                                             1.0);
                        msg.Z(i, j) += nz;
                        msg.Z(j, i) -= nz;
                    }
                }
        }
        // snap to the codec grid, exactly as the encrypted transport does
        msg.X = dequantize(config_.codec, quantize(config_.codec, msg.X));
        msg.Z = dequantize(config_.codec, quantize(config_.codec, msg.Z));
        messages_[{r, l, t}] = std::move(msg);
    }
}

BoundarySnapshot PlaintextFeed::published_message(int from, int to, int t) {
    auto it = messages_.find({from, to, t});
    if (it == messages_.end())
        throw ContractError("no published message for (" + std::to_string(from) + "->" +
                            std::to_string(to) + ", t=" + std::to_string(t) + ")");
    return it->second;
}

Eigen::MatrixXi subgradient_signs_plain(const MatrixXd& iterate_block,
                                        const MatrixXd& constant_block) {
    if (iterate_block.rows() != constant_block.rows() ||
        iterate_block.cols() != constant_block.cols())
        throw ContractError("subgradient_signs_plain: shape mismatch");
    Eigen::MatrixXi out(iterate_block.rows(), iterate_block.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            double diff = iterate_block(i, j) - constant_block(i, j);
            out(i, j) = diff > 0 ? 1 : (diff < 0 ? -1 : 0);
        }
    return out;
}

void dual_update(DualState& duals, int neighbor, int a_own, int b_own,
                 const BoundaryFeed::ReceivedDualDiff& received) {
    // received carries a_in (X^l - X^r); scaling by the receiver's own factor
    // realizes rho (X^l - X^r); the update wants rho (X^r - X^l), hence the flip
    MatrixXd dg = -static_cast<double>(a_own) * received.x_weighted;
    MatrixXd dl = -static_cast<double>(b_own) * received.z_weighted;
    if ((dg - dg.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw ContractError("dual_update: Gamma increment lost symmetry");
    if ((dl + dl.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw ContractError("dual_update: Lambda increment lost skew-symmetry");
    auto git = duals.gamma.find(neighbor);
    if (git == duals.gamma.end()) {
        duals.gamma[neighbor] = dg;
        duals.lambda[neighbor] = dl;
    } else {
        git->second += dg;
        duals.lambda[neighbor] += dl;
    }
}

double residual(BoundaryFeed& feed, const net::RegionPartition& part, int r, int t) {
    double sum = 0.0;
    for (int l : part.neighbors(r)) {
        BoundarySnapshot own = feed.published_message(r, l, t);
        BoundarySnapshot other = feed.published_message(l, r, t);
        sum += (own.X - other.X).squaredNorm() + (own.Z - other.Z).squaredNorm();
    }
    return std::sqrt(sum);
}

bool converged(const std::vector<double>& psi, double epsilon) {
    return std::all_of(psi.begin(), psi.end(), [&](double p) { return p <= epsilon; });
}

AdmmDriver::AdmmDriver(const net::PowerNetwork& net, const net::RegionPartition& part,
                       const AdmmConfig& config)
    : net_(net), part_(part), config_(config) {
    for (int r = 0; r < part_.region_count(); ++r)
        forms_.push_back(std::make_unique<sdpform::RegionForm>(net_, part_, r));
}

std::map<int, BoundarySnapshot> AdmmDriver::boundary_blocks(int r, const MatrixXd& X,
                                                            const MatrixXd& Z) const {
    std::map<int, BoundarySnapshot> out;
    for (int l : part_.neighbors(r)) {
        auto idx = part_.shared_local_indices(r, l);
        const int s = static_cast<int>(idx.size());
        BoundarySnapshot snap{MatrixXd(s, s), MatrixXd(s, s)};
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j) {
                snap.X(i, j) = X(idx[i], idx[j]);
                snap.Z(i, j) = Z(idx[i], idx[j]);
            }
        out.emplace(l, std::move(snap));
    }
    return out;
}

RegionState AdmmDriver::primal_update(int r, const DualState& duals, BoundaryFeed& feed,
                                      int t) const {
    const sdpform::RegionForm& form = *forms_[r];
    const auto& lay = form.layout();
    const auto& neighbors = part_.neighbors(r);

    std::vector<sdpform::NeighborCoupling> couplings;
    for (int l : neighbors) {
        sdpform::NeighborCoupling c;
        c.neighbor = l;
        const int s = form.shared_size(l);
        auto git = duals.gamma.find(l);
        c.gamma = git != duals.gamma.end() ? git->second : MatrixXd::Zero(s, s);
        auto lit = duals.lambda.find(l);
        c.lambda = lit != duals.lambda.end() ? lit->second : MatrixXd::Zero(s, s);
        c.signs.x_signs = Eigen::MatrixXi::Zero(s, s);
        c.signs.z_signs = Eigen::MatrixXi::Zero(s, s);
        couplings.push_back(std::move(c));
    }

    sdpform::SdpStandardForm sdp;
    form.build_constraints(sdp);
    sdp.A0 = form.build_objective(couplings, config_.alpha);
    sdpsolve::InteriorPointStepper stepper(sdp, config_.solver);

    RegionState state;
    state.outer_iter = t;
    std::vector<sdpform::BoundarySigns> prev_signs;
    bool have_prev = false;

    int k = 0;
    for (; k < config_.max_inner; ++k) {
        // current voltage block of the iterate
        MatrixXd S5 = stepper.primal().block(lay.x5_offset(), lay.x5_offset(),
                                             2 * lay.n_bus, 2 * lay.n_bus);
        MatrixXd Xfull, Zfull;
        sdpform::unembed(S5, Xfull, Zfull);

        bool all_zero = true;
        bool signs_changed = !have_prev;
        for (size_t ni = 0; ni < neighbors.size(); ++ni) {
            int l = neighbors[ni];
            auto idx = part_.shared_local_indices(r, l);
            const int s = static_cast<int>(idx.size());
            MatrixXd xb(s, s), zb(s, s);
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) {
                    xb(i, j) = Xfull(idx[i], idx[j]);
                    zb(i, j) = Zfull(idx[i], idx[j]);
                }
            auto rep = feed.primal_signs(r, l, t, k, xb, zb);
            all_zero = all_zero && rep.all_zero;
            if (have_prev && (rep.signs.x_signs != prev_signs[ni].x_signs ||
                              rep.signs.z_signs != prev_signs[ni].z_signs))
                signs_changed = true;
            if (!have_prev)
                prev_signs.push_back(rep.signs);
            else
                prev_signs[ni] = rep.signs;
            couplings[ni].signs = rep.signs;
        }
        have_prev = true;

        if (stepper.converged()) {
            if (all_zero) {
                state.inner_consensus = true;
                break;
            }
            if (!signs_changed &&
                config_.inner_stop == AdmmConfig::InnerStop::consensus_or_stationary)
                break; // stationary point of the sign-consistent objective
        }
        stepper.set_objective(form.build_objective(couplings, config_.alpha));
        if (!stepper.step()) {
            state.inner_flagged = true;
            break;
        }
    }
    if (k == config_.max_inner)
        state.inner_flagged = true;
    state.inner_iterations = stepper.iterations_done();

    auto sol = sdpform::extract_solution(form, stepper.primal());
    state.X = sol.Xr;
    state.Z = sol.Zr;
    state.P_G = sol.P_G;
    state.Q_G = sol.Q_G;
    state.cost = sol.cost;
    state.rank1_residual = sol.rank1_residual;
    state.feasibility_gap = stepper.primal_infeasibility();
    return state;
}

AdmmResult AdmmDriver::run(BoundaryFeed& feed) const {
    const int R = part_.region_count();
    AdmmResult result;
    result.duals.resize(R);
    result.states.resize(R);
    for (int r = 0; r < R; ++r)
        for (int l : part_.neighbors(r)) {
            const int s = forms_[r]->shared_size(l);
            result.duals[r].gamma[l] = MatrixXd::Zero(s, s);
            result.duals[r].lambda[l] = MatrixXd::Zero(s, s);
        }
    PenaltyDraws draws{config_.master_seed, config_.penalty_min, config_.penalty_max};

    for (int t = 0; t < config_.max_outer; ++t) {
        feed.begin_outer(t);
        // S1 with immediate publication (synchronous lookups use round t-1)
        for (int r = 0; r < R; ++r) {
            result.states[r] = primal_update(r, result.duals[r], feed, t);
            feed.publish(r, t, boundary_blocks(r, result.states[r].X, result.states[r].Z));
            result.total_inner_iterations += result.states[r].inner_iterations;
            result.worst_rank1_residual =
                std::max(result.worst_rank1_residual, result.states[r].rank1_residual);
            result.worst_feasibility_gap =
                std::max(result.worst_feasibility_gap, result.states[r].feasibility_gap);
        }
        // S2 dual updates from the fresh boundary states
        for (int r = 0; r < R; ++r) {
            auto blocks = boundary_blocks(r, result.states[r].X, result.states[r].Z);
            for (int l : part_.neighbors(r)) {
                auto received = feed.dual_exchange(r, l, t, blocks[l].X, blocks[l].Z);
                dual_update(result.duals[r], l, draws.a(r, l, t), draws.b(r, l, t), received);
            }
        }
        // residual bookkeeping
        TraceRow row;
        row.t = t;
        std::vector<double> psi(R, 0.0);
        for (int r = 0; r < R; ++r) {
            psi[r] = residual(feed, part_, r, t);
            row.psi_max = std::max(row.psi_max, psi[r]);
            row.region_cost.push_back(result.states[r].cost);
            row.total_cost += result.states[r].cost;
        }
        result.trace.push_back(row);
        result.outer_iterations = t + 1;
        result.psi_max_final = row.psi_max;
        result.total_cost = row.total_cost;
        if (converged(psi, config_.epsilon)) {
            result.converged = true;
            break;
        }
    }
    return result;
}

} // namespace ppopf::admm
