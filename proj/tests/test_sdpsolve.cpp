#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include <Eigen/Eigenvalues>

#include "ppopf/sdpsolve.hpp"

using namespace ppopf;
using namespace ppopf::sdpsolve;
using ppopf::sdpform::SdpStandardForm;
using net::Complex;

namespace {

SdpStandardForm trace_form(const MatrixXd& C) {
    SdpStandardForm f;
    f.A0 = C;
    f.A = {MatrixXd::Identity(C.rows(), C.cols())};
    f.b = VectorXd::Ones(1);
    return f;
}

MatrixXd random_symmetric(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            A(i, j) = N(rng);
    return 0.5 * (A + A.transpose());
}

} // namespace

TEST_CASE("minimum-eigenvalue program: diag(1,2)") {
    MatrixXd C = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    auto [it, rep] = solve(trace_form(C), std::nullopt);
    CHECK(rep.status == SolveStatus::optimal);
    CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-7));
    // optimizer concentrates on the small eigenvalue
    CHECK(it.X(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("trace simplex with C = I is flat") {
    MatrixXd C = MatrixXd::Identity(3, 3);
    auto [it, rep] = solve(trace_form(C), std::nullopt);
    CHECK(rep.status == SolveStatus::optimal);
    CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("3x3 random C matches the eigen oracle") {
    std::mt19937_64 rng(1234);
    MatrixXd C = random_symmetric(rng, 3);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C, Eigen::EigenvaluesOnly);
    auto [it, rep] = solve(trace_form(C), std::nullopt);
    CHECK(rep.status == SolveStatus::optimal);
    CHECK(rep.objective == doctest::Approx(eig.eigenvalues().minCoeff()).epsilon(1e-7));
}

TEST_CASE("oracle battery: 50 random min-eigenvalue programs, D <= 6") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng() % 5);
        MatrixXd C = random_symmetric(rng, n, 2.0);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C, Eigen::EigenvaluesOnly);
        auto [it, rep] = solve(trace_form(C), std::nullopt);
        INFO("trial ", trial, " n=", n);
        REQUIRE(rep.status == SolveStatus::optimal);
        CHECK(std::abs(rep.objective - eig.eigenvalues().minCoeff()) < 1e-6);
        CHECK(rep.primal_infeasibility <= 1e-8);
        CHECK(rep.dual_infeasibility <= 1e-8);
        CHECK(rep.duality_gap <= 1e-8);
        // KKT: positive semidefiniteness of both matrices at the solution
        Eigen::SelfAdjointEigenSolver<MatrixXd> ex(it.X, Eigen::EigenvaluesOnly);
        Eigen::SelfAdjointEigenSolver<MatrixXd> ez(it.Z, Eigen::EigenvaluesOnly);
        CHECK(ex.eigenvalues().minCoeff() >= -1e-8);
        CHECK(ez.eigenvalues().minCoeff() >= -1e-8);
    }
}

TEST_CASE("constructed optimum: complementary primal-dual pair is recovered") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 3 + static_cast<int>(rng() % 3);
        int M = 2 + static_cast<int>(rng() % 3);
        // orthogonal basis
        MatrixXd G = random_symmetric(rng, n);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
        MatrixXd Q = eig.eigenvectors();
        // X* on the first k eigendirections, Z* on the rest (complementary)
        int k = 1 + static_cast<int>(rng() % (n - 1));
        VectorXd xev = VectorXd::Zero(n), zev = VectorXd::Zero(n);
        std::uniform_real_distribution<double> U(0.5, 2.0);
        for (int i = 0; i < k; ++i)
            xev(i) = U(rng);
        for (int i = k; i < n; ++i)
            zev(i) = U(rng);
        MatrixXd Xstar = Q * xev.asDiagonal() * Q.transpose();
        MatrixXd Zstar = Q * zev.asDiagonal() * Q.transpose();
        SdpStandardForm f;
        f.A.resize(M);
        f.b.resize(M);
        VectorXd ystar(M);
        std::uniform_real_distribution<double> Uy(-1.0, 1.0);
        for (int m = 0; m < M; ++m) {
            f.A[m] = random_symmetric(rng, n);
            f.b(m) = (f.A[m].transpose() * Xstar).trace();
            ystar(m) = Uy(rng);
        }
        f.A0 = Zstar;
        for (int m = 0; m < M; ++m)
            f.A0 += ystar(m) * f.A[m];
        double expected = (f.A0.transpose() * Xstar).trace();

        auto [it, rep] = solve(f, std::nullopt);
        INFO("trial ", trial);
        REQUIRE(rep.status == SolveStatus::optimal);
        CHECK(std::abs(rep.objective - expected) < 1e-6 * (1.0 + std::abs(expected)));
        // strong duality at the solution
        CHECK(dual_objective(f, it.y) == doctest::Approx(rep.objective).epsilon(1e-6));
    }
}

TEST_CASE("dual helpers") {
    MatrixXd C = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    auto f = trace_form(C);
    SUBCASE("y = 0") {
        VectorXd y = VectorXd::Zero(1);
        CHECK(dual_objective(f, y) == 0.0);
        CHECK(dual_feasibility(f, y) == doctest::Approx(1.0)); // min-eig(A0)
    }
    SUBCASE("infeasible y goes negative") {
        VectorXd y(1);
        y << 10.0;
        CHECK(dual_feasibility(f, y) < 0.0);
    }
    SUBCASE("optimal pair satisfies strong duality") {
        auto [it, rep] = solve(f, std::nullopt);
        CHECK(dual_objective(f, it.y) == doctest::Approx(rep.objective).epsilon(1e-7));
        CHECK(dual_feasibility(f, it.y) >= -1e-8);
    }
}

TEST_CASE("stepper: barrier decreases and symmetry is preserved") {
    std::mt19937_64 rng(5);
    MatrixXd C = random_symmetric(rng, 4);
    auto f = trace_form(C);
    InteriorPointStepper stepper(f, {});
    std::vector<double> mus;
    for (int k = 0; k < 60 && !stepper.converged(); ++k) {
        REQUIRE(stepper.step());
        auto it = stepper.iterate();
        CHECK((it.Z - it.Z.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((it.X - it.X.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        mus.push_back(it.mu_barrier);
    }
    REQUIRE(stepper.converged());
    for (size_t k = 10; k < mus.size(); ++k)
        CHECK(mus[k] <= 0.9 * mus[k - 10]);
}

TEST_CASE("warm start is accepted and converges") {
    MatrixXd C = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    auto f = trace_form(C);
    SdpIterate warm;
    warm.X = MatrixXd::Identity(2, 2) * 0.5;
    warm.Z = MatrixXd::Identity(2, 2) * 2.0;
    warm.y = VectorXd::Zero(1);
    auto [it, rep] = solve(f, warm);
    CHECK(rep.status == SolveStatus::optimal);
    CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("invalid options are rejected") {
    MatrixXd C = MatrixXd::Identity(2, 2);
    auto f = trace_form(C);
    SolverOptions opts;
    opts.tol = 0.0;
    CHECK_THROWS_AS(InteriorPointStepper(f, opts), ContractError);
    SdpStandardForm empty;
    empty.A0 = C;
    empty.b = VectorXd();
    CHECK_THROWS_AS(InteriorPointStepper(empty, {}), ContractError);
}

TEST_CASE("end to end: two-bus OPF SDP solves and extracts") {
    std::vector<net::Bus> buses = {{1, 0.0, 0.0, 0.9, 1.1}, {2, 0.4, 0.1, 0.9, 1.1}};
    std::vector<net::Generator> gens = {{1, 0.0, 3.0, -2.0, 2.0, 0.2, 2.0, 2.0}};
    std::vector<net::Line> lines = {{1, 2, Complex(4.0, -8.0), Complex(0, 0)}};
    net::PowerNetwork net(buses, gens, lines);
    std::map<int, int> assign = {{1, 0}, {2, 0}};
    auto part = net::partition(net, assign);
    sdpform::RegionForm region(net, part, 0);
    auto f = region.build({}, 0.0);
    SolverOptions opts;
    opts.max_iters = 300;
    auto [it, rep] = solve(f, std::nullopt, opts);
    REQUIRE(rep.status == SolveStatus::optimal);
    auto sol = sdpform::extract_solution(region, it.X);
    // generation covers demand plus a small line loss
    CHECK(sol.P_G(0) > 0.4);
    CHECK(sol.P_G(0) < 0.45);
    CHECK_FALSE(sol.extraction_warning);
    // relaxation is exact on this two-bus (tree) instance
    CHECK(sol.rank1_residual < 1e-6);
    // plug the voltage profile back into the power-flow equations
    Eigen::SelfAdjointEigenSolver<net::MatrixXcd> eig(
        sol.Xr.cast<Complex>() + Complex(0, 1) * sol.Zr.cast<Complex>());
    Eigen::VectorXcd v =
        eig.eigenvectors().col(1) * std::sqrt(std::max(0.0, eig.eigenvalues()(1)));
    Eigen::VectorXcd flow = net.admittance() * v;
    Complex s2 = v(1) * std::conj(flow(1));
    CHECK(s2.real() == doctest::Approx(-0.4).epsilon(1e-5));
    CHECK(s2.imag() == doctest::Approx(-0.1).epsilon(1e-5));
}
