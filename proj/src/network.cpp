#include "gfcsim/network.hpp"

#include "gfcsim/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace gfc {

using cplx = std::complex<double>;

double GridSpec::phase_peak() const { return voltage_ll_rms * std::sqrt(2.0 / 3.0); }

double GridSpec::omega() const { return 2.0 * std::numbers::pi * frequency; }

namespace {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

AlphaBeta0 rotate(const AlphaBeta0& x, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return AlphaBeta0{c * x.alpha - s * x.beta, s * x.alpha + c * x.beta, x.zero};
}

AlphaBeta0 from_phasor(cplx z) { return AlphaBeta0{z.real(), z.imag(), 0.0}; }

}  // namespace

// ---------------------------------------------------------------------------
// Model

void NetworkModel::validate() const {
    std::set<std::string> bus_set;
    for (const auto& b : buses) {
        if (b.empty()) {
            config_error("bus ids must be non-empty");
        }
        if (!bus_set.insert(b).second) {
            config_error("duplicate bus '" + b + "'");
        }
    }
    auto require_bus = [&](const std::string& bus, const std::string& what) {
        if (!bus_set.count(bus)) {
            config_error(what + " references unknown bus '" + bus + "'");
        }
    };

    std::set<std::string> branch_ids;
    for (const auto& br : branches) {
        if (!branch_ids.insert(br.id).second) {
            config_error("duplicate branch '" + br.id + "'");
        }
        require_bus(br.from, "branch '" + br.id + "'");
        require_bus(br.to, "branch '" + br.id + "'");
        if (br.from == br.to) {
            config_error("branch '" + br.id + "' connects a bus to itself");
        }
        if (!(br.resistance >= 0.0) || !(br.inductance > 0.0)) {
            config_error("branch '" + br.id + "' needs R >= 0 and L > 0");
        }
    }

    std::set<std::string> load_ids;
    for (const auto& ld : loads) {
        if (!load_ids.insert(ld.id).second) {
            config_error("duplicate load '" + ld.id + "'");
        }
        require_bus(ld.bus, "load '" + ld.id + "'");
        if (!(ld.apparent_power >= 0.0) || !(ld.power_factor > 0.0 && ld.power_factor <= 1.0)) {
            throw Error(ErrorCode::kInvalidLoad, "load '" + ld.id + "' needs S >= 0 and 0 < pf <= 1");
        }
        if (!(ld.share >= 0.0)) {
            config_error("load '" + ld.id + "' has a negative share");
        }
    }

    std::set<std::string> breaker_ids;
    std::set<std::string> switched;
    for (const auto& cb : breakers) {
        if (!breaker_ids.insert(cb.id).second) {
            config_error("duplicate breaker '" + cb.id + "'");
        }
        if (!branch_ids.count(cb.branch)) {
            config_error("breaker '" + cb.id + "' references unknown branch '" + cb.branch + "'");
        }
        if (!switched.insert(cb.branch).second) {
            config_error("branch '" + cb.branch + "' has more than one breaker");
        }
    }

    if (grid.enabled) {
        require_bus(grid.bus, "grid");
        if (!(grid.voltage_ll_rms > 0.0) || !(grid.frequency > 0.0) || !(grid.inductance > 0.0) ||
            !(grid.resistance >= 0.0)) {
            config_error("grid needs positive voltage, frequency and inductance");
        }
    }

    if (gfcs.empty()) {
        config_error("at least one GFC is required");
    }
    std::set<std::string> gfc_ids;
    std::set<std::string> gfc_buses;
    for (const auto& g : gfcs) {
        if (!gfc_ids.insert(g.id).second) {
            config_error("duplicate GFC '" + g.id + "'");
        }
        require_bus(g.bus, "GFC '" + g.id + "'");
        require_bus(g.pcc_bus, "GFC '" + g.id + "'");
        if (!gfc_buses.insert(g.bus).second) {
            config_error("two GFCs share bus '" + g.bus + "'");
        }
        if (grid.enabled && g.bus == grid.bus) {
            config_error("GFC '" + g.id + "' sits on the grid bus");
        }
        const LoadSpec* local = find_load(g.local_load);
        if (local == nullptr || local->bus != g.bus) {
            config_error("GFC '" + g.id + "' needs a local load on its own bus");
        }
    }

    // Connected when every breaker is closed.
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        index[buses[i]] = i;
    }
    UnionFind uf(buses.size());
    for (const auto& br : branches) {
        uf.unite(index[br.from], index[br.to]);
    }
    for (std::size_t i = 1; i < buses.size(); ++i) {
        if (uf.find(i) != uf.find(0)) {
            config_error("bus '" + buses[i] + "' is not connected to '" + buses[0] +
                         "' even with all breakers closed");
        }
    }

    converter.validate();
    gains.validate();
}

const LoadSpec* NetworkModel::find_load(const std::string& id) const {
    for (const auto& ld : loads) {
        if (ld.id == id) {
            return &ld;
        }
    }
    return nullptr;
}

const BreakerSpec* NetworkModel::find_breaker(const std::string& id) const {
    for (const auto& cb : breakers) {
        if (cb.id == id) {
            return &cb;
        }
    }
    return nullptr;
}

NetworkModel default_feeder() {
    NetworkModel m;
    m.buses = {"650", "632", "633", "634", "645", "646", "671", "684", "611", "652",
               "692", "675", "680", "G1",  "G2",  "G3",  "G4"};

    const double r = 0.002;
    const double l = 0.015e-3;
    auto seg = [&](const std::string& from, const std::string& to) {
        m.branches.push_back({from + "-" + to, from, to, r, l});
    };
    seg("650", "632");
    seg("632", "633");
    seg("633", "634");
    seg("632", "645");
    seg("645", "646");
    seg("632", "671");
    seg("671", "684");
    seg("684", "611");
    seg("684", "652");
    seg("671", "692");
    seg("692", "675");
    seg("671", "680");
    seg("G1", "634");
    seg("G2", "675");
    seg("G3", "652");
    seg("G4", "646");

    m.breakers = {{"CB1", "650-632", true},
                  {"CB2", "G1-634", false},
                  {"CB3", "G2-675", false},
                  {"CB4", "G3-652", false},
                  {"CB5", "G4-646", false}};

    // Feeder load, 5.94 MVA at 0.97 pf in total.
    const std::pair<const char*, double> shares[] = {
        {"634", 0.15}, {"645", 0.10}, {"646", 0.10}, {"652", 0.10},
        {"671", 0.20}, {"675", 0.15}, {"692", 0.10}, {"611", 0.10},
    };
    for (const auto& [bus, share] : shares) {
        m.loads.push_back({std::string("MG") + bus, bus, 5.94e6 * share, 0.97, true, "mg", share});
    }
    for (int k = 1; k <= 4; ++k) {
        const std::string id = std::to_string(k);
        m.loads.push_back({"L" + id, "G" + id, 0.375e6, 1.0, true, "local", 0.25});
        m.gfcs.push_back({"GFC" + id, "G" + id, "", "L" + id});
    }
    m.gfcs[0].pcc_bus = "634";
    m.gfcs[1].pcc_bus = "675";
    m.gfcs[2].pcc_bus = "652";
    m.gfcs[3].pcc_bus = "646";

    m.grid.bus = "650";
    m.grid.resistance = 0.001;
    m.grid.inductance = 0.005e-3;
    m.gains = default_gains(m.converter);
    return m;
}

SeriesRL load_admittance(double s, double pf, double v_nom_ll_rms, double f_nom) {
    if (!(s > 0.0) || !std::isfinite(s) || !(pf > 0.0 && pf <= 1.0)) {
        throw Error(ErrorCode::kInvalidLoad, "load needs S > 0 and 0 < pf <= 1");
    }
    if (!(v_nom_ll_rms > 0.0) || !(f_nom > 0.0)) {
        throw Error(ErrorCode::kInvalidLoad, "load needs a positive nominal voltage and frequency");
    }
    const double z = v_nom_ll_rms * v_nom_ll_rms / s;
    const double x = z * std::sqrt(std::max(0.0, 1.0 - pf * pf));
    return SeriesRL{z * pf, x / (2.0 * std::numbers::pi * f_nom)};
}

NetworkModel apply_breaker(NetworkModel model, const std::string& breaker_id, bool closed) {
    for (auto& cb : model.breakers) {
        if (cb.id == breaker_id) {
            cb.closed = closed;
            return model;
        }
    }
    throw Error(ErrorCode::kUnknownBreaker, "unknown breaker '" + breaker_id + "'");
}

namespace {

LoadSpec& load_ref(NetworkModel& model, const std::string& id) {
    for (auto& ld : model.loads) {
        if (ld.id == id) {
            return ld;
        }
    }
    config_error("unknown load '" + id + "'");
}

void check_load_values(double s, double pf) {
    if (!(s >= 0.0) || !std::isfinite(s) || !(pf > 0.0 && pf <= 1.0)) {
        throw Error(ErrorCode::kInvalidLoad, "load needs S >= 0 and 0 < pf <= 1");
    }
}

}  // namespace

NetworkModel set_load(NetworkModel model, const std::string& load_id, double s, double pf) {
    check_load_values(s, pf);
    LoadSpec& ld = load_ref(model, load_id);
    ld.apparent_power = s;
    ld.power_factor = pf;
    return model;
}

NetworkModel set_load_connected(NetworkModel model, const std::string& load_id, bool connected) {
    load_ref(model, load_id).connected = connected;
    return model;
}

NetworkModel set_group_load(NetworkModel model, const std::string& group, double s_total, double pf) {
    check_load_values(s_total, pf);
    double total_share = 0.0;
    for (const auto& ld : model.loads) {
        if (ld.group == group) {
            total_share += ld.share;
        }
    }
    if (!(total_share > 0.0)) {
        config_error("load group '" + group + "' is empty");
    }
    for (auto& ld : model.loads) {
        if (ld.group == group) {
            ld.apparent_power = s_total * ld.share / total_share;
            ld.power_factor = pf;
        }
    }
    return model;
}

double group_load(const NetworkModel& model, const std::string& group) {
    double s = 0.0;
    for (const auto& ld : model.loads) {
        if (ld.group == group) {
            s += ld.apparent_power;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Solver

NetworkSolver::NetworkSolver(const NetworkModel& model) {
    model.validate();

    // Nodes: ground, grid EMF, then the buses in model order.
    node_names_.push_back("");
    node_names_.push_back("<grid>");
    for (const auto& b : model.buses) {
        node_names_.push_back(b);
    }
    const std::size_t n_nodes = node_names_.size();
    grid_node_ = 1;
    auto bus_node = [&](const std::string& b) { return *node_index(b); };

    known_slot_.assign(n_nodes, -1);
    known_slot_[0] = -2;
    known_slot_[grid_node_] = 0;
    for (std::size_t g = 0; g < model.gfcs.size(); ++g) {
        const std::size_t n = bus_node(model.gfcs[g].bus);
        gfc_nodes_.push_back(n);
        pcc_nodes_.push_back(bus_node(model.gfcs[g].pcc_bus));
        known_slot_[n] = static_cast<int>(1 + g);
    }
    n_known_ = 1 + gfc_nodes_.size();

    std::map<std::string, bool> branch_closed;
    for (const auto& cb : model.breakers) {
        branch_closed[cb.branch] = cb.closed;
    }
    for (const auto& br : model.branches) {
        const auto it = branch_closed.find(br.id);
        const bool active = it == branch_closed.end() || it->second;
        elements_.push_back({ElementKind::kBranch, bus_node(br.from), bus_node(br.to),
                             br.resistance, br.inductance, active});
    }
    const double v_nom = model.converter.nominal_voltage_ll_rms;
    const double f_nom = model.converter.nominal_frequency;
    for (const auto& ld : model.loads) {
        Element e{ElementKind::kLoad, bus_node(ld.bus), 0, 0.0, 0.0, false};
        if (ld.connected && ld.apparent_power > 0.0) {
            const SeriesRL rl = load_admittance(ld.apparent_power, ld.power_factor, v_nom, f_nom);
            e.resistance = rl.resistance;
            e.inductance = rl.inductance;
            e.active = true;
        }
        elements_.push_back(e);
    }
    elements_.push_back({ElementKind::kGrid, grid_node_,
                         model.grid.enabled ? bus_node(model.grid.bus) : grid_node_,
                         model.grid.resistance, model.grid.inductance, model.grid.enabled});
    n_el_ = elements_.size();

    // Islands over active elements; ground does not join them.
    auto components_now = [&]() {
        UnionFind uf(n_nodes);
        for (const auto& e : elements_) {
            if (e.active && e.from != 0 && e.to != 0) {
                uf.unite(e.from, e.to);
            }
        }
        std::vector<int> comp(n_nodes, -1);
        std::map<std::size_t, int> ids;
        for (std::size_t n = 1; n < n_nodes; ++n) {
            const std::size_t root = uf.find(n);
            auto [it, inserted] = ids.emplace(root, static_cast<int>(ids.size()));
            comp[n] = it->second;
        }
        return comp;
    };
    component_ = components_now();

    const int n_comp = *std::max_element(component_.begin(), component_.end()) + 1;
    std::vector<bool> has_source(n_comp, false);
    std::vector<bool> has_load(n_comp, false);
    if (model.grid.enabled) {
        has_source[component_[grid_node_]] = true;
    }
    for (std::size_t n : gfc_nodes_) {
        has_source[component_[n]] = true;
    }
    for (const auto& e : elements_) {
        if (e.active && e.to == 0) {
            has_load[component_[e.from]] = true;
        }
    }
    for (int c = 0; c < n_comp; ++c) {
        if (has_load[c] && !has_source[c]) {
            std::string where;
            for (std::size_t n = 1; n < n_nodes; ++n) {
                if (component_[n] == c) {
                    where += (where.empty() ? "" : ", ") + node_names_[n];
                }
            }
            throw Error(ErrorCode::kSingularNetwork,
                        "energized island without a voltage source: " + where);
        }
    }
    // Floating pieces without loads or sources carry nothing.
    for (auto& e : elements_) {
        if (e.active && !has_source[component_[e.from]]) {
            e.active = false;
        }
    }

    gfc_grid_connected_.resize(gfc_nodes_.size());
    for (std::size_t g = 0; g < gfc_nodes_.size(); ++g) {
        gfc_grid_connected_[g] = model.grid.enabled && component_[gfc_nodes_[g]] == component_[grid_node_];
    }

    // Unknown node voltages: live internal nodes.
    std::vector<bool> touches_active(n_nodes, false);
    std::vector<bool> touches_resistor(n_nodes, false);
    for (const auto& e : elements_) {
        if (!e.active) {
            continue;
        }
        touches_active[e.from] = touches_active[e.to] = true;
        if (e.inductance == 0.0) {
            touches_resistor[e.from] = touches_resistor[e.to] = true;
        }
    }
    std::vector<int> unknown(n_nodes, -1);
    int n_u = 0;
    for (std::size_t n = 0; n < n_nodes; ++n) {
        if (known_slot_[n] == -1 && touches_active[n]) {
            unknown[n] = n_u++;
            if (!touches_resistor[n]) {
                kcl_nodes_.push_back(n);
            }
        }
    }

    // Rows: algebraic KCL at nodes touching a resistor, differentiated KCL
    // elsewhere. M v_u = B_i i + B_v v_known.
    Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(n_u, n_u);
    Eigen::MatrixXd bi = Eigen::MatrixXd::Zero(n_u, n_el_);
    Eigen::MatrixXd bv = Eigen::MatrixXd::Zero(n_u, n_known_);
    auto add_difference = [&](int row, const Element& e, double c) {
        const std::pair<std::size_t, double> ends[] = {{e.from, c}, {e.to, -c}};
        for (const auto& [node, coef] : ends) {
            if (unknown[node] >= 0) {
                mm(row, unknown[node]) += coef;
            } else if (known_slot_[node] >= 0) {
                bv(row, known_slot_[node]) -= coef;
            }
        }
    };
    for (std::size_t n = 0; n < n_nodes; ++n) {
        const int row = unknown[n];
        if (row < 0) {
            continue;
        }
        for (std::size_t b = 0; b < n_el_; ++b) {
            const Element& e = elements_[b];
            if (!e.active || (e.from != n && e.to != n)) {
                continue;
            }
            const double a = e.from == n ? 1.0 : -1.0;
            if (touches_resistor[n]) {
                if (e.inductance == 0.0) {
                    add_difference(row, e, a / e.resistance);
                } else {
                    bi(row, b) -= a;
                }
            } else {
                add_difference(row, e, a / e.inductance);
                bi(row, b) += a * e.resistance / e.inductance;
            }
        }
    }
    Eigen::MatrixXd ki(n_u, n_el_);
    Eigen::MatrixXd kv(n_u, n_known_);
    if (n_u > 0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(mm);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::kSingularNetwork, "network node equations are singular");
        }
        ki = lu.solve(bi);
        kv = lu.solve(bv);
    }

    node_i_.assign(n_nodes * n_el_, 0.0);
    node_v_.assign(n_nodes * n_known_, 0.0);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        if (unknown[n] >= 0) {
            for (std::size_t b = 0; b < n_el_; ++b) {
                node_i_[n * n_el_ + b] = ki(unknown[n], b);
            }
            for (std::size_t s = 0; s < n_known_; ++s) {
                node_v_[n * n_known_ + s] = kv(unknown[n], s);
            }
        } else if (known_slot_[n] >= 0) {
            node_v_[n * n_known_ + known_slot_[n]] = 1.0;
        }
    }

    // Element currents as maps of (i, v_known).
    std::vector<double> el_i(n_el_ * n_el_, 0.0);
    std::vector<double> el_v(n_el_ * n_known_, 0.0);
    for (std::size_t b = 0; b < n_el_; ++b) {
        const Element& e = elements_[b];
        if (!e.active) {
            continue;
        }
        if (e.inductance > 0.0) {
            el_i[b * n_el_ + b] = 1.0;
            continue;
        }
        const double g = 1.0 / e.resistance;
        for (std::size_t k = 0; k < n_el_; ++k) {
            el_i[b * n_el_ + k] = g * (node_i_[e.from * n_el_ + k] - node_i_[e.to * n_el_ + k]);
        }
        for (std::size_t s = 0; s < n_known_; ++s) {
            el_v[b * n_known_ + s] =
                g * (node_v_[e.from * n_known_ + s] - node_v_[e.to * n_known_ + s]);
        }
    }

    a_ii_.assign(n_el_ * n_el_, 0.0);
    a_iv_.assign(n_el_ * n_known_, 0.0);
    for (std::size_t b = 0; b < n_el_; ++b) {
        const Element& e = elements_[b];
        if (!e.active || e.inductance == 0.0) {
            continue;
        }
        const double inv_l = 1.0 / e.inductance;
        for (std::size_t k = 0; k < n_el_; ++k) {
            a_ii_[b * n_el_ + k] =
                inv_l * (node_i_[e.from * n_el_ + k] - node_i_[e.to * n_el_ + k]);
        }
        a_ii_[b * n_el_ + b] -= e.resistance * inv_l;
        for (std::size_t s = 0; s < n_known_; ++s) {
            a_iv_[b * n_known_ + s] =
                inv_l * (node_v_[e.from * n_known_ + s] - node_v_[e.to * n_known_ + s]);
        }
    }

    const std::size_t n_gfc = gfc_nodes_.size();
    out_i_.assign(n_gfc * n_el_, 0.0);
    out_v_.assign(n_gfc * n_known_, 0.0);
    for (std::size_t g = 0; g < n_gfc; ++g) {
        const std::size_t n = gfc_nodes_[g];
        for (std::size_t b = 0; b < n_el_; ++b) {
            const Element& e = elements_[b];
            if (!e.active || (e.from != n && e.to != n)) {
                continue;
            }
            const double a = e.from == n ? 1.0 : -1.0;
            for (std::size_t k = 0; k < n_el_; ++k) {
                out_i_[g * n_el_ + k] += a * el_i[b * n_el_ + k];
            }
            for (std::size_t s = 0; s < n_known_; ++s) {
                out_v_[g * n_known_ + s] += a * el_v[b * n_known_ + s];
            }
        }
    }

    // Least-magnetic-energy projection onto KCL at the differentiated nodes:
    // P = I - W^-1 A^T (A W^-1 A^T)^-1 A with W = diag(L).
    projection_.clear();
    if (!kcl_nodes_.empty()) {
        const std::size_t nk = kcl_nodes_.size();
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nk, n_el_);
        Eigen::VectorXd w_inv = Eigen::VectorXd::Zero(n_el_);
        for (std::size_t b = 0; b < n_el_; ++b) {
            if (element_inductive(b)) {
                w_inv(b) = 1.0 / elements_[b].inductance;
            }
        }
        for (std::size_t r = 0; r < nk; ++r) {
            for (std::size_t b = 0; b < n_el_; ++b) {
                const Element& e = elements_[b];
                if (!element_inductive(b)) {
                    continue;
                }
                if (e.from == kcl_nodes_[r]) {
                    a(r, b) += 1.0;
                } else if (e.to == kcl_nodes_[r]) {
                    a(r, b) -= 1.0;
                }
            }
        }
        const Eigen::MatrixXd wat = w_inv.asDiagonal() * a.transpose();
        const Eigen::MatrixXd s = a * wat;
        const Eigen::MatrixXd p =
            Eigen::MatrixXd::Identity(n_el_, n_el_) - wat * s.completeOrthogonalDecomposition().solve(a);
        projection_.assign(p.data(), p.data() + p.size());  // column-major
    }
}

std::optional<std::size_t> NetworkSolver::node_index(const std::string& bus) const {
    for (std::size_t n = 2; n < node_names_.size(); ++n) {
        if (node_names_[n] == bus) {
            return n;
        }
    }
    return std::nullopt;
}

void NetworkSolver::derivative(const double* currents, const AlphaBeta0* known,
                               double* dcurrents) const {
    for (std::size_t b = 0; b < n_el_; ++b) {
        double da = 0.0;
        double db = 0.0;
        double dz = 0.0;
        if (element_inductive(b)) {
            const double* row = &a_ii_[b * n_el_];
            for (std::size_t k = 0; k < n_el_; ++k) {
                const double c = row[k];
                if (c != 0.0) {
                    da += c * currents[3 * k];
                    db += c * currents[3 * k + 1];
                    dz += c * currents[3 * k + 2];
                }
            }
            const double* vrow = &a_iv_[b * n_known_];
            for (std::size_t s = 0; s < n_known_; ++s) {
                const double c = vrow[s];
                if (c != 0.0) {
                    da += c * known[s].alpha;
                    db += c * known[s].beta;
                    dz += c * known[s].zero;
                }
            }
        }
        dcurrents[3 * b] = da;
        dcurrents[3 * b + 1] = db;
        dcurrents[3 * b + 2] = dz;
    }
}

namespace {

AlphaBeta0 apply_maps(const double* row_i, std::size_t n_el, const double* row_v, std::size_t n_known,
                      const double* currents, const AlphaBeta0* known) {
    AlphaBeta0 out;
    for (std::size_t k = 0; k < n_el; ++k) {
        const double c = row_i[k];
        if (c != 0.0) {
            out.alpha += c * currents[3 * k];
            out.beta += c * currents[3 * k + 1];
            out.zero += c * currents[3 * k + 2];
        }
    }
    for (std::size_t s = 0; s < n_known; ++s) {
        const double c = row_v[s];
        if (c != 0.0) {
            out.alpha += c * known[s].alpha;
            out.beta += c * known[s].beta;
            out.zero += c * known[s].zero;
        }
    }
    return out;
}

}  // namespace

void NetworkSolver::gfc_output_currents(const double* currents, const AlphaBeta0* known,
                                        AlphaBeta0* out) const {
    for (std::size_t g = 0; g < gfc_nodes_.size(); ++g) {
        out[g] = apply_maps(&out_i_[g * n_el_], n_el_, &out_v_[g * n_known_], n_known_, currents, known);
    }
}

AlphaBeta0 NetworkSolver::bus_voltage(std::size_t node, const double* currents,
                                      const AlphaBeta0* known) const {
    return apply_maps(&node_i_[node * n_el_], n_el_, &node_v_[node * n_known_], n_known_, currents,
                      known);
}

AlphaBeta0 NetworkSolver::element_current(std::size_t b, const double* currents,
                                          const AlphaBeta0* known) const {
    const Element& e = elements_[b];
    if (!e.active) {
        return {};
    }
    if (e.inductance > 0.0) {
        return AlphaBeta0{currents[3 * b], currents[3 * b + 1], currents[3 * b + 2]};
    }
    return (1.0 / e.resistance) *
           (bus_voltage(e.from, currents, known) - bus_voltage(e.to, currents, known));
}

void NetworkSolver::project_kcl(double* currents) const {
    for (std::size_t b = 0; b < n_el_; ++b) {
        if (!element_inductive(b)) {
            currents[3 * b] = currents[3 * b + 1] = currents[3 * b + 2] = 0.0;
        }
    }
    if (projection_.empty()) {
        return;
    }
    std::vector<double> in(currents, currents + 3 * n_el_);
    for (std::size_t r = 0; r < n_el_; ++r) {
        double acc[3] = {0.0, 0.0, 0.0};
        for (std::size_t k = 0; k < n_el_; ++k) {
            const double c = projection_[k * n_el_ + r];
            if (c != 0.0) {
                acc[0] += c * in[3 * k];
                acc[1] += c * in[3 * k + 1];
                acc[2] += c * in[3 * k + 2];
            }
        }
        currents[3 * r] = acc[0];
        currents[3 * r + 1] = acc[1];
        currents[3 * r + 2] = acc[2];
    }
}

NetworkSolver::PowerBalance NetworkSolver::power_balance(const double* currents,
                                                         const AlphaBeta0* known) const {
    PowerBalance pb;
    auto dot = [](const AlphaBeta0& v, const AlphaBeta0& i) {
        return 1.5 * (v.alpha * i.alpha + v.beta * i.beta) + 3.0 * v.zero * i.zero;
    };
    auto sq = [](const AlphaBeta0& i) {
        return 1.5 * (i.alpha * i.alpha + i.beta * i.beta) + 3.0 * i.zero * i.zero;
    };
    std::vector<AlphaBeta0> out(gfc_nodes_.size());
    gfc_output_currents(currents, known, out.data());
    for (std::size_t g = 0; g < out.size(); ++g) {
        pb.injected += dot(known[1 + g], out[g]);
    }
    for (std::size_t b = 0; b < n_el_; ++b) {
        const Element& e = elements_[b];
        if (!e.active) {
            continue;
        }
        const AlphaBeta0 i = element_current(b, currents, known);
        const double loss = e.resistance * sq(i);
        switch (e.kind) {
            case ElementKind::kLoad:
                pb.loads += loss;
                break;
            case ElementKind::kGrid:
                pb.injected += dot(known[0], i);
                pb.losses += loss;
                break;
            case ElementKind::kBranch:
                pb.losses += loss;
                break;
        }
    }
    return pb;
}

NetworkSolver::Phasors NetworkSolver::solve_phasors(double omega, const std::vector<cplx>& known) const {
    if (known.size() != n_known_) {
        throw Error(ErrorCode::kShapeMismatch, "phasor solve needs one value per voltage node");
    }
    const std::size_t n_nodes = node_names_.size();
    std::vector<int> unknown(n_nodes, -1);
    int n_u = 0;
    for (std::size_t b = 0; b < n_el_; ++b) {
        if (!elements_[b].active) {
            continue;
        }
        for (std::size_t n : {elements_[b].from, elements_[b].to}) {
            if (known_slot_[n] == -1 && unknown[n] < 0) {
                unknown[n] = n_u++;
            }
        }
    }
    std::vector<cplx> y(n_el_);
    Eigen::MatrixXcd mm = Eigen::MatrixXcd::Zero(n_u, n_u);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n_u);
    auto value = [&](std::size_t n) -> cplx {
        return known_slot_[n] >= 0 ? known[known_slot_[n]] : cplx{};
    };
    for (std::size_t b = 0; b < n_el_; ++b) {
        const Element& e = elements_[b];
        if (!e.active) {
            continue;
        }
        y[b] = 1.0 / cplx(e.resistance, omega * e.inductance);
        for (std::size_t n : {e.from, e.to}) {
            const int row = unknown[n];
            if (row < 0) {
                continue;
            }
            const double a = e.from == n ? 1.0 : -1.0;
            const std::pair<std::size_t, double> ends[] = {{e.from, 1.0}, {e.to, -1.0}};
            for (const auto& [m, sgn] : ends) {
                if (unknown[m] >= 0) {
                    mm(row, unknown[m]) += a * sgn * y[b];
                } else {
                    rhs(row) -= a * sgn * y[b] * value(m);
                }
            }
        }
    }
    Eigen::VectorXcd vu;
    if (n_u > 0) {
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(mm);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::kSingularNetwork, "phasor node equations are singular");
        }
        vu = lu.solve(rhs);
    }
    Phasors ph;
    ph.nodes.resize(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        ph.nodes[n] = unknown[n] >= 0 ? vu(unknown[n]) : value(n);
    }
    ph.elements.resize(n_el_);
    for (std::size_t b = 0; b < n_el_; ++b) {
        if (elements_[b].active) {
            ph.elements[b] = y[b] * (ph.nodes[elements_[b].from] - ph.nodes[elements_[b].to]);
        }
    }
    ph.gfc_out.assign(gfc_nodes_.size(), cplx{});
    for (std::size_t g = 0; g < gfc_nodes_.size(); ++g) {
        const std::size_t n = gfc_nodes_[g];
        for (std::size_t b = 0; b < n_el_; ++b) {
            const Element& e = elements_[b];
            if (!e.active) {
                continue;
            }
            if (e.from == n) {
                ph.gfc_out[g] += ph.elements[b];
            } else if (e.to == n) {
                ph.gfc_out[g] -= ph.elements[b];
            }
        }
    }
    return ph;
}

// ---------------------------------------------------------------------------
// Simulator

namespace {

constexpr std::size_t kConverterStateSize = 8;

}  // namespace

Simulator::Simulator(NetworkModel model, std::vector<std::unique_ptr<GfcController>> controllers,
                     SimOptions options)
    : model_(std::move(model)), controllers_(std::move(controllers)), options_(options) {
    if (!(options_.dt > 0.0) || !(options_.sample_period >= options_.dt) || !(options_.horizon > 0.0)) {
        throw Error(ErrorCode::kConfig, "simulation needs dt > 0, sample_period >= dt, horizon > 0");
    }
    solver_ = std::make_unique<NetworkSolver>(model_);
    if (controllers_.size() != model_.gfcs.size()) {
        throw Error(ErrorCode::kShapeMismatch, "one controller per GFC is required");
    }
    const std::size_t n_gfc = model_.gfcs.size();
    state_.converters.assign(n_gfc, ConverterState{});
    state_.currents.assign(3 * solver_->element_count(), 0.0);
    actions_.assign(n_gfc, ControlAction{});
    action_v_dc_.assign(n_gfc, 0.0);
    scratch_known_.resize(solver_->known_count());
    scratch_out_.resize(n_gfc);
    samples_per_tick_ = static_cast<std::size_t>(std::llround(options_.sample_period / options_.dt));
}

namespace {

struct ModuleSteadyState {
    ConverterState plant;
    OperatingPoint op;
    double i_dc_ref{};
};

// Converter module in sinusoidal steady state delivering `i_out` at `v`
// (module-scale phasors in the frame at angle theta), with the cascaded
// controller integrators at the matching equilibrium.
ModuleSteadyState module_steady_state(cplx v, cplx i_out, double omega, double theta,
                                      const ConverterParams& p, const ControlGains& g) {
    const cplx j(0.0, 1.0);
    const cplx i_s = i_out + j * omega * p.filter_capacitance * v;
    const cplx v_s = v + cplx(p.filter_resistance, omega * p.filter_inductance) * i_s;
    const double p_out = 1.5 * std::real(v * std::conj(i_out));
    const double q_out = 1.5 * std::imag(v * std::conj(i_out));
    const double p_sw = 1.5 * std::real(v_s * std::conj(i_s));

    // k_d (v_r - v) + (P_ref + P_sw - P) / v_r - P_sw / v = 0
    const double v_r = g.v_dc_ref;
    const double c = (g.p_ref * g.power_base + p_sw - p_out) / v_r;
    double v_dc = v_r;
    for (int it = 0; it < 50; ++it) {
        const double f = g.k_dc * (v_r - v_dc) + c - p_sw / v_dc;
        const double df = -g.k_dc + p_sw / (v_dc * v_dc);
        const double step = f / df;
        v_dc -= step;
        if (std::abs(step) < 1e-13 * v_r) {
            break;
        }
    }
    if (!(v_dc > 0.0) || !std::isfinite(v_dc)) {
        v_dc = v_r;
    }

    ModuleSteadyState out;
    const cplx rot = std::polar(1.0, theta);
    const cplx m = 2.0 * v_s / v_dc;
    out.plant.v_dc = v_dc;
    out.plant.i_tau = p.dc_conductance * v_dc + p_sw / v_dc;
    out.plant.i_switch = from_phasor(i_s * rot);
    out.plant.v_filter = from_phasor(v * rot);
    out.i_dc_ref = out.plant.i_tau;

    const DQ0 v_m{v.real(), v.imag(), 0.0, theta};
    const DQ0 i_m{i_out.real(), i_out.imag(), 0.0, theta};
    const DQ0 i_s_m{i_s.real(), i_s.imag(), 0.0, theta};
    const cplx v_star = m * v_r / 2.0;
    const DQ0 v_ref = droop_voltage(q_out, g);

    ControllerState ctrl;
    ctrl.theta = theta;
    if (g.k_vi > 0.0) {
        const DQ0 rest = i_s_m - i_m - (p.filter_capacitance * omega) * rotate90(v_m) -
                         g.k_vp * (v_ref - v_m);
        ctrl.y_v = (1.0 / g.k_vi) * rest;
    }
    if (g.k_ii > 0.0) {
        const DQ0 z_i = (p.filter_inductance * omega) * rotate90(i_s_m) + p.filter_resistance * i_s_m;
        const DQ0 rest = DQ0{v_star.real(), v_star.imag(), 0.0, theta} - v_m - z_i;
        ctrl.y_i = (1.0 / g.k_ii) * rest;
    }
    out.op.theta = theta;
    out.op.omega = omega;
    out.op.classic = ctrl;
    out.op.modulation = from_phasor(m * rot);
    return out;
}

}  // namespace

void Simulator::initialize() {
    const std::size_t n_gfc = model_.gfcs.size();
    const ConverterParams& p = model_.converter;
    const ControlGains& g = model_.gains;
    const double n_mod = static_cast<double>(p.n_modules);
    step_index_ = 0;
    state_.time = 0.0;
    action_time_ = 0.0;
    std::fill(state_.currents.begin(), state_.currents.end(), 0.0);

    if (!options_.steady_start) {
        for (std::size_t k = 0; k < n_gfc; ++k) {
            state_.converters[k] = ConverterState{p.dc_voltage_ref, 0.0, {}, {}};
            OperatingPoint op;
            op.omega = g.omega_ref;
            controllers_[k]->initialize(op);
            actions_[k] = ControlAction{{}, g.omega_ref, 0.0, 0.0};
            action_v_dc_[k] = p.dc_voltage_ref;
        }
        return;
    }

    const auto& comp = solver_->components();
    const int grid_comp = model_.grid.enabled ? comp[solver_->grid_node()] : -1;
    std::vector<bool> done(n_gfc, false);
    const cplx grid_emf = std::polar(model_.grid.phase_peak(), model_.grid.phase);

    auto apply_solution = [&](const NetworkSolver::Phasors& ph, int c, double omega,
                              const std::vector<std::size_t>& members) {
        for (std::size_t b = 0; b < solver_->element_count(); ++b) {
            if (!solver_->element_inductive(b)) {
                continue;
            }
            // Element belongs to the island of its non-ground end.
            const std::size_t n = solver_->element_node(b);
            if (comp[n] != c) {
                continue;
            }
            const AlphaBeta0 i = from_phasor(ph.elements[b]);
            state_.currents[3 * b] = i.alpha;
            state_.currents[3 * b + 1] = i.beta;
        }
        for (std::size_t k : members) {
            const cplx v = ph.nodes[solver_->gfc_node(k)];
            const double theta = std::arg(v);
            const cplx rot = std::polar(1.0, -theta);
            const ModuleSteadyState ss =
                module_steady_state(v * rot, ph.gfc_out[k] * rot / n_mod, omega, theta, p, g);
            state_.converters[k] = ss.plant;
            controllers_[k]->initialize(ss.op);
            actions_[k] = ControlAction{ss.op.modulation, omega, ss.i_dc_ref, 0.0};
            action_v_dc_[k] = ss.plant.v_dc;
            done[k] = true;
        }
    };

    for (std::size_t k = 0; k < n_gfc; ++k) {
        if (done[k]) {
            continue;
        }
        const int c = comp[solver_->gfc_node(k)];
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < n_gfc; ++j) {
            if (comp[solver_->gfc_node(j)] == c) {
                members.push_back(j);
            }
        }
        std::vector<cplx> known(solver_->known_count(), cplx{});
        known[0] = grid_emf;

        if (c == grid_comp || members.size() > 1) {
            const double omega = c == grid_comp ? model_.grid.omega() : g.omega_ref;
            const double phase = c == grid_comp ? model_.grid.phase : 0.0;
            for (std::size_t j : members) {
                known[1 + j] = std::polar(g.v_ref, phase);
            }
            apply_solution(solver_->solve_phasors(omega, known), c, omega, members);
            continue;
        }

        // Lone island: fixed point of the two droop laws.
        double omega = g.omega_ref;
        double v_mag = g.v_ref;
        NetworkSolver::Phasors ph;
        for (int it = 0; it < 200; ++it) {
            known[1 + k] = v_mag;
            ph = solver_->solve_phasors(omega, known);
            const cplx i_mod = ph.gfc_out[k] / n_mod;
            const double pw = 1.5 * std::real(cplx(v_mag) * std::conj(i_mod));
            const double qv = 1.5 * std::imag(cplx(v_mag) * std::conj(i_mod));
            const double omega_next = droop_frequency(pw, g);
            const double v_next = droop_voltage(qv, g).d;
            const bool converged = std::abs(omega_next - omega) < 1e-13 * omega &&
                                   std::abs(v_next - v_mag) < 1e-13 * v_mag;
            omega = omega_next;
            v_mag = v_next;
            if (converged) {
                break;
            }
        }
        known[1 + k] = v_mag;
        ph = solver_->solve_phasors(omega, known);
        apply_solution(ph, c, omega, members);
    }
    solver_->project_kcl(state_.currents.data());
}

std::vector<AlphaBeta0> Simulator::known_voltages() const {
    std::vector<AlphaBeta0> known(solver_->known_count());
    known[0] = grid_emf(state_.time);
    for (std::size_t g = 0; g < state_.converters.size(); ++g) {
        known[1 + g] = state_.converters[g].v_filter;
    }
    return known;
}

AlphaBeta0 Simulator::grid_emf(double t) const {
    if (!model_.grid.enabled) {
        return {};
    }
    const double angle = model_.grid.omega() * t + model_.grid.phase;
    const double v = model_.grid.phase_peak();
    return AlphaBeta0{v * std::cos(angle), v * std::sin(angle), 0.0};
}

GfcObservation Simulator::observe(std::size_t g) const {
    const std::vector<AlphaBeta0> known = known_voltages();
    std::vector<AlphaBeta0> out(solver_->gfc_count());
    solver_->gfc_output_currents(state_.currents.data(), known.data(), out.data());

    GfcObservation obs;
    obs.time = state_.time;
    obs.plant = state_.converters[g];
    obs.i_out = (1.0 / model_.converter.n_modules) * out[g];
    obs.v_pcc = solver_->bus_voltage(solver_->gfc_pcc_node(g), state_.currents.data(), known.data());
    obs.modulation = rotate(actions_[g].modulation, actions_[g].omega * (state_.time - action_time_));
    obs.grid_connected = solver_->gfc_grid_connected(g);
    obs.grid_omega = model_.grid.omega();
    obs.grid_voltage = model_.grid.phase_peak();
    obs.sample_tick = samples_per_tick_ > 0 && step_index_ % samples_per_tick_ == 0;
    return obs;
}

GfcSample Simulator::sample(std::size_t g) const { return controllers_[g]->telemetry(); }

void Simulator::control() {
    for (std::size_t g = 0; g < controllers_.size(); ++g) {
        const ControlAction a = controllers_[g]->step(observe(g), options_.dt);
        if (!is_finite(a.modulation) || !std::isfinite(a.omega) || !std::isfinite(a.i_dc_ref)) {
            throw Error(ErrorCode::kNonFiniteState,
                        "controller of " + model_.gfcs[g].id + " produced a non-finite action");
        }
        actions_[g] = a;
        action_v_dc_[g] = state_.converters[g].v_dc;
    }
    action_time_ = state_.time;
}

void Simulator::pack(std::vector<double>& x) const {
    const std::size_t n_gfc = state_.converters.size();
    x.resize(kConverterStateSize * n_gfc + state_.currents.size());
    for (std::size_t g = 0; g < n_gfc; ++g) {
        const ConverterState& c = state_.converters[g];
        double* o = &x[kConverterStateSize * g];
        o[0] = c.v_dc;
        o[1] = c.i_tau;
        o[2] = c.i_switch.alpha;
        o[3] = c.i_switch.beta;
        o[4] = c.i_switch.zero;
        o[5] = c.v_filter.alpha;
        o[6] = c.v_filter.beta;
        o[7] = c.v_filter.zero;
    }
    std::copy(state_.currents.begin(), state_.currents.end(), x.begin() + kConverterStateSize * n_gfc);
}

void Simulator::unpack(const std::vector<double>& x) {
    const std::size_t n_gfc = state_.converters.size();
    for (std::size_t g = 0; g < n_gfc; ++g) {
        const double* o = &x[kConverterStateSize * g];
        state_.converters[g] =
            ConverterState{o[0], o[1], {o[2], o[3], o[4]}, {o[5], o[6], o[7]}};
    }
    std::copy(x.begin() + kConverterStateSize * n_gfc, x.end(), state_.currents.begin());
}

void Simulator::evaluate(double t, const std::vector<double>& x, std::vector<double>& dx) const {
    const std::size_t n_gfc = state_.converters.size();
    const double* currents = &x[kConverterStateSize * n_gfc];
    scratch_known_[0] = grid_emf(t);
    for (std::size_t g = 0; g < n_gfc; ++g) {
        const double* o = &x[kConverterStateSize * g];
        scratch_known_[1 + g] = AlphaBeta0{o[5], o[6], o[7]};
    }
    solver_->derivative(currents, scratch_known_.data(), &dx[kConverterStateSize * n_gfc]);
    solver_->gfc_output_currents(currents, scratch_known_.data(), scratch_out_.data());

    const ConverterParams& p = model_.converter;
    const double inv_n = 1.0 / p.n_modules;
    for (std::size_t g = 0; g < n_gfc; ++g) {
        const double* o = &x[kConverterStateSize * g];
        const ConverterState c{o[0], o[1], {o[2], o[3], o[4]}, {o[5], o[6], o[7]}};
        const ControlAction& a = actions_[g];
        const double i_dc_ref = a.i_dc_ref + a.dc_slope * (c.v_dc - action_v_dc_[g]);
        const ConverterInputs u{rotate(a.modulation, a.omega * (t - action_time_)), i_dc_ref,
                                inv_n * scratch_out_[g]};
        const ConverterState d = converter_derivative(c, u, p);
        double* r = &dx[kConverterStateSize * g];
        r[0] = d.v_dc;
        r[1] = d.i_tau;
        r[2] = d.i_switch.alpha;
        r[3] = d.i_switch.beta;
        r[4] = d.i_switch.zero;
        r[5] = d.v_filter.alpha;
        r[6] = d.v_filter.beta;
        r[7] = d.v_filter.zero;
    }
}

void Simulator::integrate() {
    const double h = options_.dt;
    const double t = state_.time;
    pack(x0_);
    const std::size_t n = x0_.size();
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    xs_.resize(n);

    evaluate(t, x0_, k1_);
    for (std::size_t i = 0; i < n; ++i) {
        xs_[i] = x0_[i] + 0.5 * h * k1_[i];
    }
    evaluate(t + 0.5 * h, xs_, k2_);
    for (std::size_t i = 0; i < n; ++i) {
        xs_[i] = x0_[i] + 0.5 * h * k2_[i];
    }
    evaluate(t + 0.5 * h, xs_, k3_);
    for (std::size_t i = 0; i < n; ++i) {
        xs_[i] = x0_[i] + h * k3_[i];
    }
    evaluate(t + h, xs_, k4_);
    for (std::size_t i = 0; i < n; ++i) {
        xs_[i] = x0_[i] + (h / 6.0) * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
        if (!std::isfinite(xs_[i])) {
            throw Error(ErrorCode::kNonFiniteState, "state became non-finite");
        }
    }
    for (std::size_t g = 0; g < state_.converters.size(); ++g) {
        if (!(xs_[kConverterStateSize * g] > 0.0)) {
            throw Error(ErrorCode::kNonFiniteState,
                        "DC link of " + model_.gfcs[g].id + " collapsed");
        }
    }
    unpack(xs_);
    ++step_index_;
    state_.time = static_cast<double>(step_index_) * h;
}

void Simulator::step() {
    control();
    integrate();
}

void Simulator::apply_event(const Event& ev) {
    switch (ev.kind) {
        case Event::Kind::kBreaker:
            model_ = apply_breaker(std::move(model_), ev.target, ev.closed);
            break;
        case Event::Kind::kLoad:
            model_ = set_load(std::move(model_), ev.target, ev.apparent_power, ev.power_factor);
            break;
        case Event::Kind::kLoadGroup:
            model_ = set_group_load(std::move(model_), ev.target, ev.apparent_power, ev.power_factor);
            break;
        case Event::Kind::kLoadConnect:
            model_ = set_load_connected(std::move(model_), ev.target, ev.closed);
            break;
    }
    rebuild_solver(true);
}

void Simulator::rebuild_solver(bool project) {
    const std::vector<AlphaBeta0> known = known_voltages();
    const std::size_t n_el = solver_->element_count();
    std::vector<AlphaBeta0> before(n_el);
    std::vector<bool> was_inductive(n_el);
    for (std::size_t b = 0; b < n_el; ++b) {
        before[b] = solver_->element_current(b, state_.currents.data(), known.data());
        was_inductive[b] = solver_->element_inductive(b);
    }
    solver_ = std::make_unique<NetworkSolver>(model_);
    for (std::size_t b = 0; b < n_el; ++b) {
        if (solver_->element_inductive(b) && !was_inductive[b]) {
            state_.currents[3 * b] = before[b].alpha;
            state_.currents[3 * b + 1] = before[b].beta;
            state_.currents[3 * b + 2] = before[b].zero;
        }
    }
    if (project) {
        solver_->project_kcl(state_.currents.data());
    }
}

// ---------------------------------------------------------------------------

RunRecord simulate(const NetworkModel& model, const std::vector<Event>& events,
                   const ControllerFactory& make_controllers, const SimOptions& options,
                   const std::string& scenario_id) {
    std::vector<Event> timeline = events;
    std::stable_sort(timeline.begin(), timeline.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
    for (const auto& ev : timeline) {
        if (!(ev.time >= 0.0) || ev.time > options.horizon) {
            throw Error(ErrorCode::kConfig, "event time outside the horizon");
        }
    }

    Simulator sim(model, make_controllers(model), options);
    sim.initialize();

    RunRecord rec;
    rec.scenario_id = scenario_id;
    for (const auto& g : model.gfcs) {
        rec.gfc_names.push_back(g.id);
    }
    rec.samples.resize(model.gfcs.size());
    rec.rated_power = model.converter.rated_power;
    rec.nominal_frequency = model.converter.nominal_frequency;
    rec.p_ref_nominal = model.gains.p_ref;

    const double dt = options.dt;
    const std::size_t steps = static_cast<std::size_t>(std::llround(options.horizon / dt));
    const std::size_t per_sample = static_cast<std::size_t>(std::llround(options.sample_period / dt));
    std::size_t next_event = 0;

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        try {
            while (next_event < timeline.size() && timeline[next_event].time <= t + 0.5 * dt) {
                sim.apply_event(timeline[next_event]);
                ++next_event;
            }
            sim.control();
            if (k % per_sample == 0) {
                rec.time.push_back(t);
                for (std::size_t g = 0; g < rec.samples.size(); ++g) {
                    rec.samples[g].push_back(sim.sample(g));
                }
            }
            sim.integrate();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kNonFiniteState && e.code() != ErrorCode::kDiverged) {
                throw;
            }
            rec.diverged = true;
            rec.divergence_time = t;
            rec.divergence_reason = e.what();
            break;
        }
    }
    return rec;
}

std::vector<std::string> record_csv_header(const RunRecord& record) {
    std::vector<std::string> cols{"time"};
    for (const auto& name : record.gfc_names) {
        for (const auto& f : kFeatureNames) {
            cols.push_back(name + "." + std::string(f));
        }
        for (const char* extra : {"vs_alpha_ref", "vs_beta_ref", "v_dc", "i_dc", "f"}) {
            cols.push_back(name + "." + extra);
        }
    }
    cols.push_back("diverged");
    return cols;
}

void write_record_csv(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    }
    const auto header = record_csv_header(record);
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i ? "," : "") << header[i];
    }
    out << '\n';
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
    };
    for (std::size_t k = 0; k < record.time.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", record.time[k]);
        out << buf;
        for (const auto& trace : record.samples) {
            const GfcSample& s = trace[k];
            for (double f : s.features) {
                put(f);
            }
            put(s.v_s_ref.alpha);
            put(s.v_s_ref.beta);
            put(s.v_dc);
            put(s.i_dc);
            put(s.frequency);
        }
        out << ',' << (record.diverged ? 1 : 0) << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
    }
}

}  // namespace gfc
