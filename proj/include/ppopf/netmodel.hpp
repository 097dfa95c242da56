#pragma once

#include <complex>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppopf/common.hpp"

namespace ppopf::net {

using Complex = std::complex<double>;
using MatrixXcd = Eigen::MatrixXcd;
using MatrixXd = Eigen::MatrixXd;

struct Bus {
    int id = 0;
    double p_demand = 0.0;
    double q_demand = 0.0;
    double v_min = 0.9;
    double v_max = 1.1;
};

struct Generator {
    int bus_id = 0;
    double p_min = 0.0, p_max = 0.0;
    double q_min = 0.0, q_max = 0.0;
    double cost_a = 0.0, cost_b = 0.0, cost_c = 0.0;
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    Complex series_admittance{0.0, 0.0};
    Complex shunt{0.0, 0.0}; // total line charging, split half per end
};

/// Validated network with the nodal admittance matrix assembled.
class PowerNetwork {
public:
    PowerNetwork(std::vector<Bus> buses, std::vector<Generator> gens, std::vector<Line> lines,
                 std::string name = "");

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Generator>& generators() const { return gens_; }
    const std::vector<Line>& lines() const { return lines_; }
    const std::string& name() const { return name_; }

    int bus_count() const { return static_cast<int>(buses_.size()); }
    /// Dense index of a bus id.
    int index_of(int bus_id) const;
    const Bus& bus(int bus_id) const { return buses_[index_of(bus_id)]; }
    /// Generators at a bus (dense index), possibly empty.
    std::vector<int> generators_at(int bus_index) const;

    const MatrixXcd& admittance() const { return Y_; }

private:
    std::vector<Bus> buses_;
    std::vector<Generator> gens_;
    std::vector<Line> lines_;
    std::string name_;
    std::map<int, int> id_to_index_;
    MatrixXcd Y_;
};

/// Native structured case format (JSON). Throws SchemaError naming the field
/// on malformed input.
PowerNetwork parse_case(const std::string& text);
std::string case_to_json(const PowerNetwork& net);

/// Best-effort importer for the common open matrix-laboratory case syntax.
PowerNetwork parse_matpower(const std::string& text);

/// Per-bus operator matrices derived from Y. All matrices are over the full
/// bus set; restrict_to() cuts the rows/columns of an index set.
struct AdmittanceOperators {
    MatrixXcd Y;

    /// Y_i = e_i e_i^T Y (row i of Y in row i, zero elsewhere).
    MatrixXcd Y_row(int i) const;
    /// Hermitian part 1/2 (Y_i^H + Y_i); Tr{Y_h(i) vv^H} = net active injection.
    MatrixXcd Y_hermitian(int i) const;
    /// 1/2 sqrt(-1) (Y_i^H - Y_i); Tr{.} = net reactive injection.
    MatrixXcd Y_skew(int i) const;
    MatrixXcd M(int i) const; // e_i e_i^T

    static MatrixXcd N_sym(int n, int i, int j);  // 1/2 (e_i e_j^T + e_j e_i^T)
    static MatrixXcd N_skew(int n, int i, int j); // sqrt(-1)/2 (e_i e_j^T - e_j e_i^T)

    static MatrixXcd restrict_to(const MatrixXcd& m, const std::vector<int>& idx);
};

AdmittanceOperators build_operators(const PowerNetwork& net);

/// Region decomposition: home sets R_r, extended sets B_r (home plus
/// duplicated neighbour-boundary buses), shared-bus orderings and the 0/1
/// selection matrices E_{r->l}.
class RegionPartition {
public:
    struct TieLine {
        int from_bus; // endpoint in region r (global id)
        int to_bus;   // endpoint in region l (global id)
    };

    RegionPartition(const PowerNetwork& net, const std::map<int, int>& assignment);

    int region_count() const { return region_count_; }
    int region_of(int bus_id) const;

    /// Home buses R_r as sorted global ids.
    const std::vector<int>& home_buses(int r) const { return home_[r]; }
    /// Extended set B_r as sorted global ids.
    const std::vector<int>& extended_buses(int r) const { return extended_[r]; }
    /// B_r as dense network indices (aligned with extended_buses order).
    const std::vector<int>& extended_indices(int r) const { return extended_idx_[r]; }

    const std::vector<int>& neighbors(int r) const { return neighbors_[r]; }
    /// Shared buses B_r cap B_l, sorted by global id (identical from both sides).
    const std::vector<int>& shared_buses(int r, int l) const;
    const std::vector<TieLine>& tie_lines(int r, int l) const;

    /// Selection matrix E_{r->l}, shape |B_r cap B_l| x |B_r|.
    MatrixXd selection(int r, int l) const;
    /// Positions of the shared buses inside B_r (row order of selection()).
    std::vector<int> shared_local_indices(int r, int l) const;

    int local_index(int r, int bus_id) const; // position of bus in B_r

private:
    static void check_pattern_chordal(const std::vector<std::set<int>>& pattern,
                                      const PowerNetwork& net);

    int region_count_ = 0;
    std::map<int, int> assignment_;
    std::vector<std::vector<int>> home_;
    std::vector<std::vector<int>> extended_;
    std::vector<std::vector<int>> extended_idx_;
    std::vector<std::vector<int>> neighbors_;
    std::map<std::pair<int, int>, std::vector<int>> shared_;
    std::map<std::pair<int, int>, std::vector<TieLine>> ties_;
    std::vector<std::map<int, int>> local_index_;
};

RegionPartition partition(const PowerNetwork& net, const std::map<int, int>& assignment);
std::map<int, int> parse_partition(const std::string& text);

/// E_{r->l} M E_{r->l}^T for a square matrix over B_r.
MatrixXd extract_boundary(const MatrixXd& m, const RegionPartition& part, int r, int l);

} // namespace ppopf::net
