#include "ppopf/sdpform.hpp"

#include <Eigen/Eigenvalues>

namespace ppopf::sdpform {

namespace {

void require_symmetric(const MatrixXd& m, const char* what, double tol = 1e-9) {
    if (m.rows() != m.cols() || (m - m.transpose()).cwiseAbs().maxCoeff() > tol)
        throw ContractError(std::string(what) + " is not symmetric");
}

void require_skew(const MatrixXd& m, const char* what, double tol = 1e-9) {
    if (m.rows() != m.cols() || (m + m.transpose()).cwiseAbs().maxCoeff() > tol)
        throw ContractError(std::string(what) + " is not skew-symmetric");
}

} // namespace

MatrixXd embed_real(const MatrixXd& X, const MatrixXd& Z) {
    require_symmetric(X, "embedding X part");
    require_skew(Z, "embedding Z part");
    const auto n = X.rows();
    MatrixXd out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = X;
    out.topRightCorner(n, n) = -Z;
    out.bottomLeftCorner(n, n) = Z;
    out.bottomRightCorner(n, n) = X;
    return out;
}

MatrixXd embed_hermitian(const MatrixXcd& W) {
    if ((W - W.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
        throw ContractError("embed_hermitian: matrix is not Hermitian");
    return embed_real(W.real(), W.imag());
}

MatrixXd embed_coeff(const MatrixXcd& C) { return 0.5 * embed_hermitian(C); }

void unembed(const MatrixXd& S, MatrixXd& X, MatrixXd& Z) {
    const auto n = S.rows() / 2;
    if (S.rows() != S.cols() || S.rows() % 2 != 0)
        throw ContractError("unembed: matrix is not an even-order square");
    X = 0.5 * (S.topLeftCorner(n, n) + S.bottomRightCorner(n, n));
    Z = 0.5 * (S.bottomLeftCorner(n, n) - S.topRightCorner(n, n));
    X = 0.5 * (X + X.transpose()).eval();
    Z = 0.5 * (Z - Z.transpose()).eval();
}

bool check_psd_embedding(const MatrixXd& X, const MatrixXd& Z, double floor) {
    MatrixXd S = embed_real(X, Z);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() >= floor;
}

RegionForm::RegionForm(const net::PowerNetwork& net, const net::RegionPartition& part, int region)
    : net_(net), part_(part), region_(region), ops_(net::build_operators(net)) {
    bus_idx_ = part.extended_indices(region);
    for (int home : part.home_buses(region))
        for (int g : net.generators_at(net.index_of(home)))
            home_gens_.push_back(g);
    layout_.n_gen = static_cast<int>(home_gens_.size());
    layout_.n_bus = static_cast<int>(bus_idx_.size());
}

int RegionForm::shared_size(int neighbor) const {
    return static_cast<int>(part_.shared_buses(region_, neighbor).size());
}

MatrixXcd RegionForm::restricted(const MatrixXcd& global) const {
    return net::AdmittanceOperators::restrict_to(global, bus_idx_);
}

void RegionForm::build_constraints(SdpStandardForm& form) const {
    const int D = layout_.dimension();
    form.layout = layout_;
    form.A.clear();
    form.constraint_names.clear();
    std::vector<double> rhs;

    auto push = [&](MatrixXd a, double bval, std::string name) {
        form.A.push_back(std::move(a));
        rhs.push_back(bval);
        form.constraint_names.push_back(std::move(name));
    };
    auto x5 = [&](const MatrixXcd& coeff) {
        MatrixXd a = MatrixXd::Zero(D, D);
        a.block(layout_.x5_offset(), layout_.x5_offset(), 2 * layout_.n_bus, 2 * layout_.n_bus) =
            embed_coeff(coeff);
        return a;
    };

    // Power balance for home buses. The admittance rows of home buses are
    // complete inside B_r, so the restricted traces equal the true injections.
    for (int home : part_.home_buses(region_)) {
        const int gi = net_.index_of(home);
        const net::Bus& bus = net_.buses()[gi];
        auto gens_here = net_.generators_at(gi);
        if (!gens_here.empty()) {
            MatrixXd ap = x5(-restricted(ops_.Y_hermitian(gi)));
            MatrixXd aq = x5(-restricted(ops_.Y_skew(gi)));
            for (int g : gens_here) {
                auto it = std::find(home_gens_.begin(), home_gens_.end(), g);
                int slot = static_cast<int>(it - home_gens_.begin());
                ap(layout_.pg(slot), layout_.dg_p(slot)) += 0.5;
                ap(layout_.dg_p(slot), layout_.pg(slot)) += 0.5;
                aq(layout_.qg(slot), layout_.dg_q(slot)) += 0.5;
                aq(layout_.dg_q(slot), layout_.qg(slot)) += 0.5;
            }
            push(std::move(ap), bus.p_demand, "P balance bus " + std::to_string(home));
            push(std::move(aq), bus.q_demand, "Q balance bus " + std::to_string(home));
        } else {
            push(x5(restricted(ops_.Y_hermitian(gi))), -bus.p_demand,
                 "P balance bus " + std::to_string(home));
            push(x5(restricted(ops_.Y_skew(gi))), -bus.q_demand,
                 "Q balance bus " + std::to_string(home));
        }
    }

    // Voltage magnitude boxes with squared slacks, over all of B_r.
    for (int b = 0; b < layout_.n_bus; ++b) {
        const net::Bus& bus = net_.buses()[bus_idx_[b]];
        MatrixXcd Mb = MatrixXcd::Zero(layout_.n_bus, layout_.n_bus);
        Mb(b, b) = 1.0;
        MatrixXd up = x5(Mb);
        up(layout_.ub(b), layout_.ub(b)) = 1.0;
        push(std::move(up), bus.v_max * bus.v_max, "V upper bus " + std::to_string(bus.id));
        MatrixXd lo = x5(Mb);
        lo(layout_.lb(b), layout_.lb(b)) = -1.0;
        push(std::move(lo), bus.v_min * bus.v_min, "V lower bus " + std::to_string(bus.id));
    }

    // Generator boxes and the d^2 = 1 normalizations.
    for (int slot = 0; slot < layout_.n_gen; ++slot) {
        const net::Generator& gen = net_.generators()[home_gens_[slot]];
        std::string tag = " gen@" + std::to_string(gen.bus_id);
        MatrixXd a = MatrixXd::Zero(D, D);
        a(layout_.pg(slot), layout_.dg_p(slot)) = 0.5;
        a(layout_.dg_p(slot), layout_.pg(slot)) = 0.5;
        MatrixXd pu = a;
        pu(layout_.ug(slot), layout_.ug(slot)) = 1.0;
        push(std::move(pu), gen.p_max, "P upper" + tag);
        MatrixXd pl = a;
        pl(layout_.lg(slot), layout_.lg(slot)) = -1.0;
        push(std::move(pl), gen.p_min, "P lower" + tag);

        MatrixXd aq = MatrixXd::Zero(D, D);
        aq(layout_.qg(slot), layout_.dg_q(slot)) = 0.5;
        aq(layout_.dg_q(slot), layout_.qg(slot)) = 0.5;
        MatrixXd qu = aq;
        qu(layout_.ur(slot), layout_.ur(slot)) = 1.0;
        push(std::move(qu), gen.q_max, "Q upper" + tag);
        MatrixXd ql = aq;
        ql(layout_.lr(slot), layout_.lr(slot)) = -1.0;
        push(std::move(ql), gen.q_min, "Q lower" + tag);

        MatrixXd dp = MatrixXd::Zero(D, D);
        dp(layout_.dg_p(slot), layout_.dg_p(slot)) = 1.0;
        push(std::move(dp), 1.0, "d norm P" + tag);
        MatrixXd dq = MatrixXd::Zero(D, D);
        dq(layout_.dg_q(slot), layout_.dg_q(slot)) = 1.0;
        push(std::move(dq), 1.0, "d norm Q" + tag);
    }

    form.b = Eigen::Map<VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
}

MatrixXd RegionForm::build_objective(const std::vector<NeighborCoupling>& couplings,
                                     double alpha) const {
    const int D = layout_.dimension();
    MatrixXd A0 = MatrixXd::Zero(D, D);
    // Diagonal slots that no constraint or cost term touches (Q_G^2 always,
    // P_G^2 when cost_a is zero) have a structurally zero dual slack, which
    // leaves the primal unbounded along them. A vanishing positive weight
    // pins them to their PSD floor, the rank-consistent corner.
    constexpr double kFreeSlotWeight = 1e-6;
    for (int slot = 0; slot < layout_.n_gen; ++slot) {
        const net::Generator& gen = net_.generators()[home_gens_[slot]];
        A0(layout_.pg(slot), layout_.pg(slot)) += std::max(gen.cost_a, kFreeSlotWeight);
        A0(layout_.pg(slot), layout_.dg_p(slot)) += 0.5 * gen.cost_b;
        A0(layout_.dg_p(slot), layout_.pg(slot)) += 0.5 * gen.cost_b;
        A0(layout_.dg_p(slot), layout_.dg_p(slot)) += gen.cost_c;
        A0(layout_.qg(slot), layout_.qg(slot)) += kFreeSlotWeight;
    }

    MatrixXcd coupling = MatrixXcd::Zero(layout_.n_bus, layout_.n_bus);
    for (const NeighborCoupling& c : couplings) {
        require_symmetric(c.gamma, "dual Gamma");
        require_skew(c.lambda, "dual Lambda");
        const auto locals = part_.shared_local_indices(region_, c.neighbor);
        const int s = static_cast<int>(locals.size());
        if (c.gamma.rows() != s || c.lambda.rows() != s)
            throw ContractError("dual block size does not match the shared boundary");
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b)
                coupling(locals[a], locals[b]) += Complex(c.gamma(a, b), c.lambda(a, b));
        // consensus-gap subgradient terms, one per distinct boundary entry
        for (int a = 0; a < s; ++a) {
            coupling(locals[a], locals[a]) += alpha * static_cast<double>(c.signs.x_signs(a, a));
            for (int b = a + 1; b < s; ++b) {
                int sx = c.signs.x_signs(a, b);
                int sz = c.signs.z_signs(a, b);
                if (sx != 0) {
                    coupling(locals[a], locals[b]) += 0.5 * alpha * sx;
                    coupling(locals[b], locals[a]) += 0.5 * alpha * sx;
                }
                if (sz != 0) {
                    coupling(locals[a], locals[b]) += Complex(0.0, 0.5 * alpha * sz);
                    coupling(locals[b], locals[a]) -= Complex(0.0, 0.5 * alpha * sz);
                }
            }
        }
    }
    if (!couplings.empty())
        A0.block(layout_.x5_offset(), layout_.x5_offset(), 2 * layout_.n_bus, 2 * layout_.n_bus) +=
            embed_coeff(coupling);
    return A0;
}

double RegionForm::objective_constant(const std::vector<NeighborCoupling>& couplings,
                                      const std::map<int, MatrixXd>& x_constants,
                                      const std::map<int, MatrixXd>& z_constants,
                                      double alpha) const {
    double constant = 0.0;
    for (const NeighborCoupling& c : couplings) {
        const MatrixXd& xc = x_constants.at(c.neighbor);
        const MatrixXd& zc = z_constants.at(c.neighbor);
        constant -= (c.gamma.transpose() * xc).trace();
        constant -= (c.lambda.transpose() * zc).trace();
        const int s = static_cast<int>(xc.rows());
        for (int a = 0; a < s; ++a) {
            constant -= alpha * c.signs.x_signs(a, a) * xc(a, a);
            for (int b = a + 1; b < s; ++b) {
                constant -= alpha * c.signs.x_signs(a, b) * xc(a, b);
                constant -= alpha * c.signs.z_signs(a, b) * zc(a, b);
            }
        }
    }
    return constant;
}

SdpStandardForm RegionForm::build(const std::vector<NeighborCoupling>& couplings,
                                  double alpha) const {
    SdpStandardForm form;
    build_constraints(form);
    form.A0 = build_objective(couplings, alpha);
    return form;
}

RegionSolution extract_solution(const RegionForm& form, const MatrixXd& X) {
    const VariableLayout& lay = form.layout();
    RegionSolution sol;
    sol.P_G.resize(lay.n_gen);
    sol.Q_G.resize(lay.n_gen);
    for (int g = 0; g < lay.n_gen; ++g) {
        sol.P_G(g) = X(lay.pg(g), lay.dg_p(g));
        sol.Q_G(g) = X(lay.qg(g), lay.dg_q(g));
        sol.d_slot_error = std::max(sol.d_slot_error,
                                    std::abs(X(lay.dg_p(g), lay.dg_p(g)) - 1.0));
        sol.d_slot_error = std::max(sol.d_slot_error,
                                    std::abs(X(lay.dg_q(g), lay.dg_q(g)) - 1.0));
        const net::Generator& gen = form.network().generators()[form.home_generators()[g]];
        sol.cost += gen.cost_a * sol.P_G(g) * sol.P_G(g) + gen.cost_b * sol.P_G(g) + gen.cost_c;
    }
    sol.extraction_warning = sol.d_slot_error > 1e-4;

    MatrixXd S5 = X.block(lay.x5_offset(), lay.x5_offset(), 2 * lay.n_bus, 2 * lay.n_bus);
    unembed(S5, sol.Xr, sol.Zr);
    MatrixXcd W = sol.Xr.cast<Complex>() + Complex(0, 1) * sol.Zr.cast<Complex>();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(W, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues(); // ascending
    const int n = static_cast<int>(ev.size());
    double top = ev(n - 1);
    double second = (n >= 2) ? std::max(0.0, ev(n - 2)) : 0.0;
    sol.rank1_residual = top > 0 ? second / top : 1.0;
    return sol;
}

void dump_triplets(const SdpStandardForm& form, std::ostream& os) {
    auto dump_matrix = [&](const MatrixXd& m, int idx) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = i; j < m.cols(); ++j)
                if (m(i, j) != 0.0)
                    os << "A " << idx << " " << i << " " << j << " " << format_sig(m(i, j))
                       << "\n";
    };
    os << "D " << form.layout.dimension() << " M " << form.A.size() << "\n";
    dump_matrix(form.A0, 0);
    for (size_t m = 0; m < form.A.size(); ++m) {
        dump_matrix(form.A[m], static_cast<int>(m) + 1);
        os << "b " << m + 1 << " " << format_sig(form.b(static_cast<Eigen::Index>(m))) << "\n";
    }
}

} // namespace ppopf::sdpform
