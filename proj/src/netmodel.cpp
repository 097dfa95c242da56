#include "ppopf/netmodel.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "vendor_json.hpp"

namespace ppopf::net {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok)
        throw SchemaError(msg);
}

// Bron-Kerbosch with pivoting; networks here are desk-scale.
void bron_kerbosch(std::set<int>& R, std::set<int> P, std::set<int> X,
                   const std::vector<std::set<int>>& adj,
                   std::vector<std::set<int>>& out) {
    if (P.empty() && X.empty()) {
        if (R.size() >= 2)
            out.push_back(R);
        return;
    }
    int pivot = -1;
    size_t best = 0;
    for (const auto& s : {P, X})
        for (int v : s) {
            size_t deg = adj[v].size();
            if (pivot < 0 || deg > best) {
                pivot = v;
                best = deg;
            }
        }
    std::vector<int> candidates;
    for (int v : P)
        if (pivot < 0 || !adj[pivot].count(v))
            candidates.push_back(v);
    for (int v : candidates) {
        std::set<int> P2, X2;
        for (int u : P)
            if (adj[v].count(u))
                P2.insert(u);
        for (int u : X)
            if (adj[v].count(u))
                X2.insert(u);
        R.insert(v);
        bron_kerbosch(R, P2, X2, adj, out);
        R.erase(v);
        P.erase(v);
        X.insert(v);
    }
}

} // namespace

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<Generator> gens,
                           std::vector<Line> lines, std::string name)
    : buses_(std::move(buses)), gens_(std::move(gens)), lines_(std::move(lines)),
      name_(std::move(name)) {
    require(!buses_.empty(), "case: empty bus list");
    std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    for (size_t i = 0; i < buses_.size(); ++i) {
        const Bus& b = buses_[i];
        require(!id_to_index_.count(b.id), "case: duplicate bus id " + std::to_string(b.id));
        require(b.v_min > 0 && b.v_min <= b.v_max,
                "case: bus " + std::to_string(b.id) + " has invalid voltage bounds (v_min > v_max or v_min <= 0)");
        id_to_index_[b.id] = static_cast<int>(i);
    }
    for (const Generator& g : gens_) {
        require(id_to_index_.count(g.bus_id),
                "case: generator references unknown bus " + std::to_string(g.bus_id));
        require(g.p_min <= g.p_max, "case: generator at bus " + std::to_string(g.bus_id) + " has p_min > p_max");
        require(g.q_min <= g.q_max, "case: generator at bus " + std::to_string(g.bus_id) + " has q_min > q_max");
        require(g.cost_a >= 0 && g.cost_b >= 0 && g.cost_c >= 0,
                "case: generator at bus " + std::to_string(g.bus_id) + " has negative cost coefficient");
    }
    const int n = bus_count();
    Y_ = MatrixXcd::Zero(n, n);
    for (const Line& l : lines_) {
        require(l.from_bus != l.to_bus, "case: line with identical endpoints " + std::to_string(l.from_bus));
        require(id_to_index_.count(l.from_bus), "case: line references unknown bus " + std::to_string(l.from_bus));
        require(id_to_index_.count(l.to_bus), "case: line references unknown bus " + std::to_string(l.to_bus));
        int f = index_of(l.from_bus), t = index_of(l.to_bus);
        Y_(f, f) += l.series_admittance + 0.5 * l.shunt;
        Y_(t, t) += l.series_admittance + 0.5 * l.shunt;
        Y_(f, t) -= l.series_admittance;
        Y_(t, f) -= l.series_admittance;
    }
    if (n > 1) {
        std::vector<std::vector<int>> adj(n);
        for (const Line& l : lines_) {
            adj[index_of(l.from_bus)].push_back(index_of(l.to_bus));
            adj[index_of(l.to_bus)].push_back(index_of(l.from_bus));
        }
        std::vector<char> seen(n, 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        int reached = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    ++reached;
                    q.push(v);
                }
        }
        require(reached == n, "case: network graph is disconnected");
    }
}

int PowerNetwork::index_of(int bus_id) const {
    auto it = id_to_index_.find(bus_id);
    if (it == id_to_index_.end())
        throw SchemaError("unknown bus id " + std::to_string(bus_id));
    return it->second;
}

std::vector<int> PowerNetwork::generators_at(int bus_index) const {
    std::vector<int> out;
    for (size_t g = 0; g < gens_.size(); ++g)
        if (index_of(gens_[g].bus_id) == bus_index)
            out.push_back(static_cast<int>(g));
    return out;
}

namespace {

double num_field(const nlohmann::json& j, const char* field, const std::string& ctx) {
    if (!j.contains(field))
        throw SchemaError("case: missing field '" + std::string(field) + "' in " + ctx);
    if (!j.at(field).is_number())
        throw SchemaError("case: field '" + std::string(field) + "' in " + ctx + " is not a number");
    return j.at(field).get<double>();
}

} // namespace

PowerNetwork parse_case(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("case: invalid JSON: ") + e.what());
    }
    require(j.contains("buses") && j["buses"].is_array(), "case: missing 'buses' array");
    std::vector<Bus> buses;
    for (const auto& jb : j["buses"]) {
        Bus b;
        b.id = static_cast<int>(num_field(jb, "id", "bus entry"));
        std::string ctx = "bus " + std::to_string(b.id);
        b.p_demand = jb.value("p_demand", 0.0);
        b.q_demand = jb.value("q_demand", 0.0);
        b.v_min = jb.contains("v_min") ? num_field(jb, "v_min", ctx) : 0.9;
        b.v_max = jb.contains("v_max") ? num_field(jb, "v_max", ctx) : 1.1;
        buses.push_back(b);
    }
    std::vector<Generator> gens;
    if (j.contains("generators")) {
        require(j["generators"].is_array(), "case: 'generators' is not an array");
        for (const auto& jg : j["generators"]) {
            Generator g;
            g.bus_id = static_cast<int>(num_field(jg, "bus", "generator entry"));
            std::string ctx = "generator at bus " + std::to_string(g.bus_id);
            g.p_min = num_field(jg, "p_min", ctx);
            g.p_max = num_field(jg, "p_max", ctx);
            g.q_min = num_field(jg, "q_min", ctx);
            g.q_max = num_field(jg, "q_max", ctx);
            g.cost_a = num_field(jg, "cost_a", ctx);
            g.cost_b = num_field(jg, "cost_b", ctx);
            g.cost_c = num_field(jg, "cost_c", ctx);
            gens.push_back(g);
        }
    }
    require(j.contains("lines") && j["lines"].is_array(), "case: missing 'lines' array");
    std::vector<Line> lines;
    for (const auto& jl : j["lines"]) {
        Line l;
        l.from_bus = static_cast<int>(num_field(jl, "from", "line entry"));
        l.to_bus = static_cast<int>(num_field(jl, "to", "line entry"));
        std::string ctx = "line " + std::to_string(l.from_bus) + "-" + std::to_string(l.to_bus);
        if (jl.contains("r") || jl.contains("x")) {
            double r = num_field(jl, "r", ctx), x = num_field(jl, "x", ctx);
            require(r != 0.0 || x != 0.0, "case: zero impedance in " + ctx);
            l.series_admittance = 1.0 / Complex(r, x);
        } else {
            l.series_admittance = Complex(num_field(jl, "y_re", ctx), num_field(jl, "y_im", ctx));
        }
        l.shunt = Complex(jl.value("shunt_re", 0.0), jl.value("shunt_im", 0.0));
        lines.push_back(l);
    }
    return PowerNetwork(std::move(buses), std::move(gens), std::move(lines),
                        j.value("name", std::string{}));
}

std::string case_to_json(const PowerNetwork& net) {
    nlohmann::json j;
    j["version"] = 1;
    j["name"] = net.name();
    for (const Bus& b : net.buses())
        j["buses"].push_back({{"id", b.id},
                              {"p_demand", b.p_demand},
                              {"q_demand", b.q_demand},
                              {"v_min", b.v_min},
                              {"v_max", b.v_max}});
    j["generators"] = nlohmann::json::array();
    for (const Generator& g : net.generators())
        j["generators"].push_back({{"bus", g.bus_id},
                                   {"p_min", g.p_min},
                                   {"p_max", g.p_max},
                                   {"q_min", g.q_min},
                                   {"q_max", g.q_max},
                                   {"cost_a", g.cost_a},
                                   {"cost_b", g.cost_b},
                                   {"cost_c", g.cost_c}});
    j["lines"] = nlohmann::json::array();
    for (const Line& l : net.lines())
        j["lines"].push_back({{"from", l.from_bus},
                              {"to", l.to_bus},
                              {"y_re", l.series_admittance.real()},
                              {"y_im", l.series_admittance.imag()},
                              {"shunt_re", l.shunt.real()},
                              {"shunt_im", l.shunt.imag()}});
    return j.dump(2);
}

namespace {

// Pulls the rows of "mpc.<name> = [ ... ];" as vectors of doubles.
std::vector<std::vector<double>> matpower_table(const std::string& text, const std::string& name) {
    auto key = "mpc." + name;
    auto pos = text.find(key);
    if (pos == std::string::npos)
        return {};
    pos = text.find('[', pos);
    auto end = text.find(']', pos);
    if (pos == std::string::npos || end == std::string::npos)
        throw SchemaError("matpower: unterminated table " + name);
    std::string body = text.substr(pos + 1, end - pos - 1);
    std::vector<std::vector<double>> rows;
    std::stringstream ss(body);
    std::string line;
    while (std::getline(ss, line, ';')) {
        // strip comments
        auto cpos = line.find('%');
        if (cpos != std::string::npos)
            line = line.substr(0, cpos);
        std::stringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v)
            row.push_back(v);
        if (!row.empty())
            rows.push_back(row);
    }
    return rows;
}

double matpower_scalar(const std::string& text, const std::string& name, double fallback) {
    auto key = "mpc." + name;
    auto pos = text.find(key);
    if (pos == std::string::npos)
        return fallback;
    pos = text.find('=', pos);
    if (pos == std::string::npos)
        return fallback;
    return std::stod(text.substr(pos + 1));
}

} // namespace

PowerNetwork parse_matpower(const std::string& text) {
    double base = matpower_scalar(text, "baseMVA", 100.0);
    auto bus_rows = matpower_table(text, "bus");
    auto gen_rows = matpower_table(text, "gen");
    auto branch_rows = matpower_table(text, "branch");
    auto cost_rows = matpower_table(text, "gencost");
    require(!bus_rows.empty(), "matpower: no bus table");
    require(!branch_rows.empty(), "matpower: no branch table");

    std::vector<Bus> buses;
    for (const auto& row : bus_rows) {
        require(row.size() >= 13, "matpower: short bus row");
        Bus b;
        b.id = static_cast<int>(row[0]);
        b.p_demand = row[2] / base;
        b.q_demand = row[3] / base;
        b.v_max = row[11];
        b.v_min = row[12];
        buses.push_back(b);
    }
    std::vector<Generator> gens;
    for (size_t i = 0; i < gen_rows.size(); ++i) {
        const auto& row = gen_rows[i];
        require(row.size() >= 10, "matpower: short gen row");
        Generator g;
        g.bus_id = static_cast<int>(row[0]);
        g.q_max = row[3] / base;
        g.q_min = row[4] / base;
        g.p_max = row[8] / base;
        g.p_min = row[9] / base;
        if (i < cost_rows.size()) {
            const auto& c = cost_rows[i];
            // model 2 (polynomial): [2 startup shutdown ncost cn ... c0]
            if (c.size() >= 7 && c[0] == 2 && c[3] == 3) {
                g.cost_a = c[4] * base * base;
                g.cost_b = c[5] * base;
                g.cost_c = c[6];
            } else if (c.size() >= 6 && c[0] == 2 && c[3] == 2) {
                g.cost_b = c[4] * base;
                g.cost_c = c[5];
            }
        }
        gens.push_back(g);
    }
    std::vector<Line> lines;
    for (const auto& row : branch_rows) {
        require(row.size() >= 5, "matpower: short branch row");
        Line l;
        l.from_bus = static_cast<int>(row[0]);
        l.to_bus = static_cast<int>(row[1]);
        require(row[2] != 0.0 || row[3] != 0.0, "matpower: zero-impedance branch");
        l.series_admittance = 1.0 / Complex(row[2], row[3]);
        l.shunt = Complex(0.0, row[4]);
        lines.push_back(l);
    }
    return PowerNetwork(std::move(buses), std::move(gens), std::move(lines), "matpower-import");
}

MatrixXcd AdmittanceOperators::Y_row(int i) const {
    MatrixXcd out = MatrixXcd::Zero(Y.rows(), Y.cols());
    out.row(i) = Y.row(i);
    return out;
}

MatrixXcd AdmittanceOperators::Y_hermitian(int i) const {
    MatrixXcd yi = Y_row(i);
    return 0.5 * (yi.adjoint() + yi);
}

MatrixXcd AdmittanceOperators::Y_skew(int i) const {
    // Oriented so that Tr{Y_skew(i) vv^H} equals the reactive injection
    // Im{v_i (Yv)_i^*}.
    MatrixXcd yi = Y_row(i);
    return 0.5 * Complex(0.0, 1.0) * (yi - yi.adjoint());
}

MatrixXcd AdmittanceOperators::M(int i) const {
    MatrixXcd out = MatrixXcd::Zero(Y.rows(), Y.cols());
    out(i, i) = 1.0;
    return out;
}

MatrixXcd AdmittanceOperators::N_sym(int n, int i, int j) {
    MatrixXcd out = MatrixXcd::Zero(n, n);
    out(i, j) += 0.5;
    out(j, i) += 0.5;
    return out;
}

MatrixXcd AdmittanceOperators::N_skew(int n, int i, int j) {
    MatrixXcd out = MatrixXcd::Zero(n, n);
    out(i, j) += Complex(0.0, 0.5);
    out(j, i) -= Complex(0.0, 0.5);
    return out;
}

MatrixXcd AdmittanceOperators::restrict_to(const MatrixXcd& m, const std::vector<int>& idx) {
    MatrixXcd out(idx.size(), idx.size());
    for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = 0; b < idx.size(); ++b)
            out(a, b) = m(idx[a], idx[b]);
    return out;
}

AdmittanceOperators build_operators(const PowerNetwork& net) {
    return AdmittanceOperators{net.admittance()};
}

RegionPartition::RegionPartition(const PowerNetwork& net, const std::map<int, int>& assignment)
    : assignment_(assignment) {
    for (const Bus& b : net.buses())
        require(assignment_.count(b.id),
                "partition: bus " + std::to_string(b.id) + " has no region assignment");
    for (const auto& [bus_id, r] : assignment_) {
        net.index_of(bus_id); // known bus
        require(r >= 0, "partition: negative region id");
        region_count_ = std::max(region_count_, r + 1);
    }
    home_.resize(region_count_);
    extended_.resize(region_count_);
    extended_idx_.resize(region_count_);
    neighbors_.resize(region_count_);
    local_index_.resize(region_count_);
    for (const Bus& b : net.buses())
        home_[assignment_.at(b.id)].push_back(b.id);
    for (auto& h : home_) {
        require(!h.empty(), "partition: a region has no buses");
        std::sort(h.begin(), h.end());
    }

    std::vector<std::set<int>> ext(region_count_);
    for (int r = 0; r < region_count_; ++r)
        ext[r].insert(home_[r].begin(), home_[r].end());
    for (const Line& l : net.lines()) {
        int rf = assignment_.at(l.from_bus), rt = assignment_.at(l.to_bus);
        if (rf == rt)
            continue;
        ext[rf].insert(l.to_bus);
        ext[rt].insert(l.from_bus);
        ties_[{rf, rt}].push_back({l.from_bus, l.to_bus});
        ties_[{rt, rf}].push_back({l.to_bus, l.from_bus});
    }
    for (int r = 0; r < region_count_; ++r) {
        extended_[r].assign(ext[r].begin(), ext[r].end());
        for (size_t i = 0; i < extended_[r].size(); ++i) {
            extended_idx_[r].push_back(net.index_of(extended_[r][i]));
            local_index_[r][extended_[r][i]] = static_cast<int>(i);
        }
    }
    for (int r = 0; r < region_count_; ++r)
        for (int l = 0; l < region_count_; ++l) {
            if (l == r)
                continue;
            std::vector<int> shared;
            std::set_intersection(extended_[r].begin(), extended_[r].end(), extended_[l].begin(),
                                  extended_[l].end(), std::back_inserter(shared));
            if (!shared.empty() && ties_.count({r, l})) {
                neighbors_[r].push_back(l);
                shared_[{r, l}] = shared;
            }
        }

    // Regional PSD blocks certify the global PSD constraint only when the
    // overlap pattern admits a PSD completion: every maximal clique of the
    // filled pattern graph (edges = pairs co-appearing in some B_r) must lie
    // inside a single B_r, and the pattern must be chordal. Trees always pass.
    const int n = net.bus_count();
    std::vector<std::set<int>> pattern(n);
    for (int r = 0; r < region_count_; ++r)
        for (int a : extended_idx_[r])
            for (int b : extended_idx_[r])
                if (a != b)
                    pattern[a].insert(b);
    std::set<int> R, P, X;
    for (int i = 0; i < n; ++i)
        P.insert(i);
    std::vector<std::set<int>> cliques;
    bron_kerbosch(R, P, X, pattern, cliques);
    for (const auto& clique : cliques) {
        bool covered = false;
        for (int r = 0; r < region_count_ && !covered; ++r) {
            covered = std::all_of(clique.begin(), clique.end(), [&](int idx) {
                return ext[r].count(net.buses()[idx].id) > 0;
            });
        }
        if (!covered) {
            std::string ids;
            for (int idx : clique)
                ids += (ids.empty() ? "" : ",") + std::to_string(net.buses()[idx].id);
            throw SchemaError("partition: maximal clique {" + ids +
                              "} of the coupling pattern is not contained in any extended region set");
        }
    }
    check_pattern_chordal(pattern, net);
}

// Maximum-cardinality search; the reverse visit order is a perfect
// elimination order iff the graph is chordal.
void RegionPartition::check_pattern_chordal(const std::vector<std::set<int>>& pattern,
                                            const PowerNetwork& net) {
    const int n = static_cast<int>(pattern.size());
    std::vector<int> weight(n, 0), order;
    std::vector<char> visited(n, 0);
    for (int step = 0; step < n; ++step) {
        int best = -1;
        for (int v = 0; v < n; ++v)
            if (!visited[v] && (best < 0 || weight[v] > weight[best]))
                best = v;
        visited[best] = 1;
        order.push_back(best);
        for (int u : pattern[best])
            if (!visited[u])
                ++weight[u];
    }
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i)
        pos[order[i]] = i;
    for (int i = n - 1; i >= 0; --i) {
        int v = order[i];
        // earlier-ordered neighbours of v must form a clique with the latest one
        int parent = -1;
        for (int u : pattern[v])
            if (pos[u] < i && (parent < 0 || pos[u] > pos[parent]))
                parent = u;
        if (parent < 0)
            continue;
        for (int u : pattern[v]) {
            if (pos[u] < pos[parent] && !pattern[parent].count(u)) {
                throw SchemaError(
                    "partition: coupling pattern is not chordal near buses {" +
                    std::to_string(net.buses()[u].id) + "," + std::to_string(net.buses()[v].id) +
                    "," + std::to_string(net.buses()[parent].id) +
                    "}; regional PSD blocks would not certify the global constraint");
            }
        }
    }
}

int RegionPartition::region_of(int bus_id) const {
    auto it = assignment_.find(bus_id);
    if (it == assignment_.end())
        throw SchemaError("partition: unknown bus " + std::to_string(bus_id));
    return it->second;
}

const std::vector<int>& RegionPartition::shared_buses(int r, int l) const {
    auto it = shared_.find({r, l});
    if (it == shared_.end())
        throw ContractError("regions " + std::to_string(r) + " and " + std::to_string(l) +
                            " are not neighbors");
    return it->second;
}

const std::vector<RegionPartition::TieLine>& RegionPartition::tie_lines(int r, int l) const {
    auto it = ties_.find({r, l});
    if (it == ties_.end())
        throw ContractError("no tie lines between regions " + std::to_string(r) + " and " +
                            std::to_string(l));
    return it->second;
}

MatrixXd RegionPartition::selection(int r, int l) const {
    const auto& shared = shared_buses(r, l);
    MatrixXd E = MatrixXd::Zero(shared.size(), extended_[r].size());
    for (size_t row = 0; row < shared.size(); ++row)
        E(row, local_index(r, shared[row])) = 1.0;
    return E;
}

std::vector<int> RegionPartition::shared_local_indices(int r, int l) const {
    std::vector<int> out;
    for (int bus : shared_buses(r, l))
        out.push_back(local_index(r, bus));
    return out;
}

int RegionPartition::local_index(int r, int bus_id) const {
    auto it = local_index_[r].find(bus_id);
    if (it == local_index_[r].end())
        throw ContractError("bus " + std::to_string(bus_id) + " not in extended set of region " +
                            std::to_string(r));
    return it->second;
}

RegionPartition partition(const PowerNetwork& net, const std::map<int, int>& assignment) {
    return RegionPartition(net, assignment);
}

std::map<int, int> parse_partition(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("partition: invalid JSON: ") + e.what());
    }
    require(j.contains("assignment"), "partition: missing 'assignment' object");
    std::map<int, int> out;
    for (const auto& [key, value] : j["assignment"].items()) {
        require(value.is_number_integer(), "partition: region for bus " + key + " is not an integer");
        out[std::stoi(key)] = value.get<int>();
    }
    return out;
}

MatrixXd extract_boundary(const MatrixXd& m, const RegionPartition& part, int r, int l) {
    const auto idx = part.shared_local_indices(r, l);
    if (m.rows() != m.cols() ||
        m.rows() != static_cast<Eigen::Index>(part.extended_buses(r).size()))
        throw ContractError("extract_boundary: matrix is not square over B_r");
    MatrixXd out(idx.size(), idx.size());
    for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = 0; b < idx.size(); ++b)
            out(a, b) = m(idx[a], idx[b]);
    return out;
}

} // namespace ppopf::net
