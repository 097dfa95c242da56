#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ppopf/netmodel.hpp"

using namespace ppopf;
using namespace ppopf::net;

namespace {

std::string two_bus_case() {
    return R"({
      "name": "two-bus",
      "buses": [
        {"id": 1, "p_demand": 0.0, "q_demand": 0.0, "v_min": 0.9, "v_max": 1.1},
        {"id": 2, "p_demand": 0.5, "q_demand": 0.1, "v_min": 0.9, "v_max": 1.1}
      ],
      "generators": [
        {"bus": 1, "p_min": 0, "p_max": 2, "q_min": -1, "q_max": 1,
         "cost_a": 0.2, "cost_b": 2, "cost_c": 2}
      ],
      "lines": [{"from": 1, "to": 2, "y_re": 1.0, "y_im": -2.0}]
    })";
}

std::string path3_case() {
    return R"({
      "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
      "lines": [{"from": 1, "to": 2, "y_re": 2.0, "y_im": -4.0},
                {"from": 2, "to": 3, "y_re": 1.0, "y_im": -3.0}]
    })";
}

} // namespace

TEST_CASE("parse_case: hand-assembled nodal admittance") {
    auto net = parse_case(two_bus_case());
    REQUIRE(net.bus_count() == 2);
    Complex y(1.0, -2.0);
    const auto& Y = net.admittance();
    CHECK(Y(0, 0) == y);
    CHECK(Y(1, 1) == y);
    CHECK(Y(0, 1) == -y);
    CHECK(Y(1, 0) == -y);
}

TEST_CASE("parse_case: non-generator bus has no generation capability") {
    auto net = parse_case(two_bus_case());
    CHECK(net.generators_at(net.index_of(2)).empty());
    CHECK(net.generators_at(net.index_of(1)).size() == 1);
}

TEST_CASE("parse_case: errors name the offending field") {
    CHECK_THROWS_WITH_AS(parse_case(R"({"buses": [{"id": 1}]})"),
                         doctest::Contains("lines"), SchemaError);
    CHECK_THROWS_WITH_AS(
        parse_case(R"({"buses": [{"id": 1}, {"id": 2}],
                       "lines": [{"from": 1, "y_re": 1.0, "y_im": 0.0}]})"),
        doctest::Contains("to"), SchemaError);
    // v_min > v_max
    CHECK_THROWS_WITH_AS(
        parse_case(R"({"buses": [{"id": 1, "v_min": 1.2, "v_max": 1.0}, {"id": 2}],
                       "lines": [{"from": 1, "to": 2, "y_re": 1.0, "y_im": 0.0}]})"),
        doctest::Contains("voltage bounds"), SchemaError);
    // duplicate ids
    CHECK_THROWS_WITH_AS(
        parse_case(R"({"buses": [{"id": 1}, {"id": 1}],
                       "lines": [{"from": 1, "to": 1, "y_re": 1.0, "y_im": 0.0}]})"),
        doctest::Contains("duplicate"), SchemaError);
}

TEST_CASE("parse_case: disconnected graph rejected") {
    CHECK_THROWS_WITH_AS(
        parse_case(R"({"buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}],
                       "lines": [{"from": 1, "to": 2, "y_re": 1.0, "y_im": 0.0},
                                 {"from": 3, "to": 4, "y_re": 1.0, "y_im": 0.0}]})"),
        doctest::Contains("disconnected"), SchemaError);
}

TEST_CASE("parse_case: r/x line entry converted to admittance") {
    auto net = parse_case(R"({
      "buses": [{"id": 1}, {"id": 2}],
      "lines": [{"from": 1, "to": 2, "r": 0.1, "x": 0.2}]})");
    Complex y = 1.0 / Complex(0.1, 0.2);
    CHECK(std::abs(net.admittance()(0, 0) - y) < 1e-14);
}

TEST_CASE("case JSON round trip") {
    auto net = parse_case(two_bus_case());
    auto net2 = parse_case(case_to_json(net));
    CHECK(net2.bus_count() == net.bus_count());
    CHECK(net2.admittance().isApprox(net.admittance()));
    CHECK(net2.generators().size() == net.generators().size());
}

TEST_CASE("parse_matpower: small import") {
    std::string m = R"(
function mpc = case2
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 12.6 1 1.1 0.9;
  2 1 50 10 0 0 1 1 0 12.6 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 80 -80 1 100 1 150 0;
];
mpc.branch = [
  1 2 0.01 0.02 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.02 20 1;
];
)";
    auto net = parse_matpower(m);
    CHECK(net.bus_count() == 2);
    CHECK(net.bus(2).p_demand == doctest::Approx(0.5));
    CHECK(net.generators().size() == 1);
    CHECK(net.generators()[0].p_max == doctest::Approx(1.5));
    // cost rescaled to per-unit power
    CHECK(net.generators()[0].cost_a == doctest::Approx(0.02 * 100 * 100));
    CHECK(net.generators()[0].cost_b == doctest::Approx(20 * 100));
}

TEST_CASE("build_operators: scalar Hermitian part") {
    auto net = parse_case(R"({"buses": [{"id": 7}], "lines": []})");
    auto ops = build_operators(net);
    CHECK(ops.Y_hermitian(0)(0, 0) == Complex(0.0, 0.0)); // no lines, Y = 0
}

TEST_CASE("build_operators: flat voltage has zero net injection") {
    auto net = parse_case(two_bus_case());
    auto ops = build_operators(net);
    Eigen::VectorXcd v(2);
    v << Complex(1, 0), Complex(1, 0);
    MatrixXcd W = v * v.adjoint();
    Complex inj = (ops.Y_hermitian(0) * W).trace();
    CHECK(std::abs(inj) < 1e-12);
}

TEST_CASE("build_operators: M_2 for N=3") {
    auto net = parse_case(path3_case());
    auto ops = build_operators(net);
    auto M = ops.M(1);
    CHECK(M(1, 1) == Complex(1, 0));
    CHECK(M.cwiseAbs().sum() == 1.0);
}

TEST_CASE("operators: Hermitian/skew structure") {
    auto net = parse_case(path3_case());
    auto ops = build_operators(net);
    for (int i = 0; i < 3; ++i) {
        CHECK((ops.Y_hermitian(i) - ops.Y_hermitian(i).adjoint()).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((ops.Y_skew(i) - ops.Y_skew(i).adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("invariant: shunt-free Y rows sum to zero; sum of Y_i rebuilds Y") {
    auto net = parse_case(path3_case());
    const auto& Y = net.admittance();
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(Y.row(i).sum()) < 1e-12);
    auto ops = build_operators(net);
    MatrixXcd sum = MatrixXcd::Zero(3, 3);
    for (int i = 0; i < 3; ++i)
        sum += ops.Y_row(i);
    CHECK((sum - Y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("invariant: power injection identities") {
    auto net = parse_case(path3_case());
    auto ops = build_operators(net);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-0.3, 0.3);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXcd v(3);
        for (int i = 0; i < 3; ++i)
            v(i) = std::polar(mag(rng), ang(rng));
        MatrixXcd W = v * v.adjoint();
        Eigen::VectorXcd flow = net.admittance() * v;
        for (int i = 0; i < 3; ++i) {
            Complex s = v(i) * std::conj(flow(i));
            CHECK(std::abs((ops.Y_hermitian(i) * W).trace().real() - s.real()) < 1e-10);
            CHECK(std::abs((ops.Y_skew(i) * W).trace().real() - s.imag()) < 1e-10);
        }
    }
}

TEST_CASE("partition: two buses, two regions") {
    auto net = parse_case(two_bus_case());
    auto part = partition(net, {{1, 0}, {2, 1}});
    CHECK(part.region_count() == 2);
    CHECK(part.extended_buses(0) == std::vector<int>{1, 2});
    CHECK(part.extended_buses(1) == std::vector<int>{1, 2});
    CHECK(part.neighbors(0) == std::vector<int>{1});
    CHECK(part.shared_buses(0, 1) == std::vector<int>{1, 2});
    // the four boundary index pairs of the tie line
    auto idx = part.shared_local_indices(0, 1);
    REQUIRE(idx.size() == 2);
    CHECK(part.tie_lines(0, 1).size() == 1);
}

TEST_CASE("partition: single region has no neighbors") {
    auto net = parse_case(two_bus_case());
    auto part = partition(net, {{1, 0}, {2, 0}});
    CHECK(part.region_count() == 1);
    CHECK(part.neighbors(0).empty());
    CHECK(part.extended_buses(0) == std::vector<int>{1, 2});
}

TEST_CASE("partition: 3-bus path split 2/1") {
    auto net = parse_case(path3_case());
    auto part = partition(net, {{1, 0}, {2, 0}, {3, 1}});
    CHECK(part.extended_buses(0) == std::vector<int>{1, 2, 3});
    CHECK(part.extended_buses(1) == std::vector<int>{2, 3});
    CHECK(part.shared_buses(0, 1) == std::vector<int>{2, 3});
    auto E = part.selection(0, 1);
    REQUIRE(E.rows() == 2);
    REQUIRE(E.cols() == 3);
    // rows pick buses 2 and 3 out of B_0 = {1,2,3}
    CHECK(E(0, 1) == 1.0);
    CHECK(E(1, 2) == 1.0);
    CHECK(E.sum() == 2.0);
    MatrixXd EEt = E * E.transpose();
    CHECK(EEt.isApprox(MatrixXd::Identity(2, 2)));
}

TEST_CASE("partition: missing assignment rejected") {
    auto net = parse_case(path3_case());
    CHECK_THROWS_WITH_AS(partition(net, {{1, 0}, {2, 0}}), doctest::Contains("no region"),
                         SchemaError);
}

TEST_CASE("partition: PSD-equivalence guard on non-tree networks") {
    SUBCASE("split triangle is still covered (duplication pulls in both endpoints)") {
        auto net = parse_case(R"({
          "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
          "lines": [{"from": 1, "to": 2, "y_re": 1.0, "y_im": -1.0},
                    {"from": 2, "to": 3, "y_re": 1.0, "y_im": -1.0},
                    {"from": 1, "to": 3, "y_re": 1.0, "y_im": -1.0}]})");
        CHECK_NOTHROW(partition(net, {{1, 0}, {2, 1}, {3, 2}}));
        CHECK_NOTHROW(partition(net, {{1, 0}, {2, 0}, {3, 0}}));
    }
    SUBCASE("8-cycle in four regions breaks the completion pattern") {
        std::string text = R"({
          "buses": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4},
                    {"id": 5}, {"id": 6}, {"id": 7}, {"id": 8}],
          "lines": [{"from": 1, "to": 2, "y_re": 1.0, "y_im": -1.0},
                    {"from": 2, "to": 3, "y_re": 1.0, "y_im": -1.0},
                    {"from": 3, "to": 4, "y_re": 1.0, "y_im": -1.0},
                    {"from": 4, "to": 5, "y_re": 1.0, "y_im": -1.0},
                    {"from": 5, "to": 6, "y_re": 1.0, "y_im": -1.0},
                    {"from": 6, "to": 7, "y_re": 1.0, "y_im": -1.0},
                    {"from": 7, "to": 8, "y_re": 1.0, "y_im": -1.0},
                    {"from": 8, "to": 1, "y_re": 1.0, "y_im": -1.0}]})";
        auto net = parse_case(text);
        CHECK_THROWS_AS(
            partition(net, {{1, 0}, {2, 0}, {3, 1}, {4, 1}, {5, 2}, {6, 2}, {7, 3}, {8, 3}}),
            SchemaError);
        // single region is fine
        CHECK_NOTHROW(partition(net, {{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}, {7, 0}, {8, 0}}));
    }
}

TEST_CASE("extract_boundary") {
    auto net = parse_case(path3_case());
    auto part = partition(net, {{1, 0}, {2, 0}, {3, 1}});
    SUBCASE("identity maps to boundary identity") {
        MatrixXd I = MatrixXd::Identity(3, 3);
        CHECK(extract_boundary(I, part, 0, 1).isApprox(MatrixXd::Identity(2, 2)));
    }
    SUBCASE("marked entries are the shared-bus entries") {
        MatrixXd M = MatrixXd::Zero(3, 3);
        M(1, 1) = 4.0;  // bus 2 x bus 2
        M(1, 2) = 7.0;  // bus 2 x bus 3
        M(2, 1) = 7.0;
        M(2, 2) = 9.0;
        M(0, 0) = -5.0; // interior, must not appear
        auto B = extract_boundary(M, part, 0, 1);
        CHECK(B(0, 0) == 4.0);
        CHECK(B(0, 1) == 7.0);
        CHECK(B(1, 0) == 7.0);
        CHECK(B(1, 1) == 9.0);
    }
    SUBCASE("zero maps to zero") {
        CHECK(extract_boundary(MatrixXd::Zero(3, 3), part, 0, 1).isZero());
    }
    SUBCASE("dimension mismatch rejected") {
        CHECK_THROWS_AS(extract_boundary(MatrixXd::Zero(2, 2), part, 0, 1), ContractError);
    }
}

TEST_CASE("partition file parsing") {
    auto a = parse_partition(R"({"assignment": {"1": 0, "2": 0, "3": 1}})");
    CHECK(a.at(3) == 1);
    CHECK_THROWS_AS(parse_partition(R"({"x": 1})"), SchemaError);
}
