// Per-unit grid data model: buses, branches, generators, polynomial costs.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "acopf/common.hpp"

namespace acopf {

enum class BusKind { PQ, PV, Slack };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;      // p.u.
    double q_load = 0.0;      // p.u.
    double g_shunt = 0.0;     // p.u.
    double b_shunt = 0.0;     // p.u.
    double v_min = 0.94;      // p.u.
    double v_max = 1.06;      // p.u.
    double delta_min = -std::numbers::pi;  // rad
    double delta_max = std::numbers::pi;   // rad
    double v_init = 1.0;      // p.u.
    double delta_init = 0.0;  // rad

    // Case-file columns carried through for round-trip: area, baseKV, zone,
    // plus anything beyond the 13 consumed columns.
    double area = 1.0;
    double base_kv = 0.0;
    double zone = 1.0;
    std::vector<double> extra;
};

// Polynomial in generator output, highest degree first. Stored against p.u.
// power so that evaluation at P in p.u. equals the case-file $/hr value.
struct CostPolynomial {
    std::vector<double> coefficients;

    double eval(double p) const {
        double acc = 0.0;
        for (double c : coefficients) acc = acc * p + c;
        return acc;
    }
    double deriv(double p) const {
        double acc = 0.0;
        size_t n = coefficients.size();
        for (size_t i = 0; i + 1 < n; ++i) {
            double k = static_cast<double>(n - 1 - i);
            acc = acc * p + coefficients[i] * k;
        }
        return acc;
    }
    double second_deriv(double p) const {
        double acc = 0.0;
        size_t n = coefficients.size();
        for (size_t i = 0; i + 2 < n; ++i) {
            double k = static_cast<double>(n - 1 - i);
            acc = acc * p + coefficients[i] * k * (k - 1);
        }
        return acc;
    }
};

struct Generator {
    int bus_id = 0;
    double p_min = 0.0, p_max = 0.0;  // p.u.
    double q_min = 0.0, q_max = 0.0;  // p.u.
    double v_setpoint = 1.0;          // p.u.
    CostPolynomial cost;
    bool in_service = true;

    double p_init = 0.0, q_init = 0.0;  // case-file dispatch, p.u.
    double mbase = 100.0;
    double cost_startup = 0.0, cost_shutdown = 0.0;
    std::vector<double> extra;
};

struct Branch {
    int from_bus = 0, to_bus = 0;
    double r = 0.0, x = 0.0;      // p.u.
    double b_charging = 0.0;      // p.u., total
    double tap = 1.0;             // off-nominal ratio, 1.0 if none
    double shift = 0.0;           // rad
    double rate_mva = 0.0;        // 0 = unlimited
    bool in_service = true;

    double rate_b = 0.0, rate_c = 0.0;
    std::vector<double> extra;
};

struct Network {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Generator> generators;
    std::vector<Branch> branches;
    std::string name;
};

inline std::vector<std::string> validate(const Network& net) {
    std::vector<std::string> out;
    auto add = [&out](const std::string& s) { out.push_back(s); };

    if (net.buses.empty()) add("network has no buses");
    if (net.generators.empty()) add("network has no generators");
    if (net.base_mva <= 0) add("base_mva must be positive");

    std::unordered_map<int, int> seen;
    std::vector<int> slack_ids;
    for (const Bus& b : net.buses) {
        if (++seen[b.id] == 2) add("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) slack_ids.push_back(b.id);
        if (b.v_min > b.v_max)
            add("bus " + std::to_string(b.id) + ": v_min > v_max");
        if (b.delta_min > b.delta_max)
            add("bus " + std::to_string(b.id) + ": delta_min > delta_max");
    }
    if (!net.buses.empty() && slack_ids.empty()) add("no slack bus");
    if (slack_ids.size() > 1) {
        std::ostringstream ss;
        ss << "multiple slack buses:";
        for (int id : slack_ids) ss << ' ' << id;
        add(ss.str());
    }

    for (size_t i = 0; i < net.generators.size(); ++i) {
        const Generator& g = net.generators[i];
        std::string tag = "generator " + std::to_string(i) + " (bus " +
                          std::to_string(g.bus_id) + ")";
        if (!seen.count(g.bus_id)) add(tag + ": unknown bus");
        if (g.p_min > g.p_max) add(tag + ": p_min > p_max");
        if (g.q_min > g.q_max) add(tag + ": q_min > q_max");
        if (g.cost.coefficients.empty()) {
            add(tag + ": empty cost polynomial");
        } else if (!std::isfinite(g.cost.eval(g.p_min)) ||
                   !std::isfinite(g.cost.eval(g.p_max))) {
            add(tag + ": cost not finite on [p_min, p_max]");
        }
    }

    for (size_t i = 0; i < net.branches.size(); ++i) {
        const Branch& br = net.branches[i];
        std::string tag = "branch " + std::to_string(i) + " (" +
                          std::to_string(br.from_bus) + "-" +
                          std::to_string(br.to_bus) + ")";
        if (!seen.count(br.from_bus) || !seen.count(br.to_bus))
            add(tag + ": unknown bus");
        if (br.r < 0) add(tag + ": negative resistance");
        if (br.r == 0 && br.x == 0) add(tag + ": zero impedance");
        if (br.tap <= 0) add(tag + ": non-positive tap");
    }
    return out;
}

// Positional lookups shared by the solvers. Bus/generator order follows the
// Network; "non-slack generators" are those not attached to the slack bus.
class NetworkIndex {
public:
    explicit NetworkIndex(const Network& net) : net_(&net) {
        int n = static_cast<int>(net.buses.size());
        for (int i = 0; i < n; ++i) {
            if (!bus_pos_.emplace(net.buses[i].id, i).second)
                throw Error("duplicate bus id " + std::to_string(net.buses[i].id));
            if (net.buses[i].kind == BusKind::Slack) {
                if (slack_ >= 0) throw Error("multiple slack buses");
                slack_ = i;
            }
        }
        if (slack_ < 0) throw Error("no slack bus");
        gens_at_.assign(n, {});
        int ng = static_cast<int>(net.generators.size());
        for (int g = 0; g < ng; ++g) {
            const Generator& gen = net.generators[g];
            auto it = bus_pos_.find(gen.bus_id);
            if (it == bus_pos_.end())
                throw Error("generator references unknown bus " +
                            std::to_string(gen.bus_id));
            gen_bus_.push_back(it->second);
            if (gen.in_service) gens_at_[it->second].push_back(g);
        }
        for (int g = 0; g < ng; ++g) {
            if (gen_bus_[g] != slack_ && net.generators[g].in_service)
                non_slack_gens_.push_back(g);
        }
        for (int i = 0; i < n; ++i) {
            if (i == slack_) continue;
            if (!gens_at_[i].empty()) pv_.push_back(i);
            else pq_.push_back(i);
        }
        // Distinct generator buses excluding slack, ascending bus position;
        // defines the voltage-target layout used by datagen.
        std::vector<int> gb;
        for (int i : pv_) gb.push_back(i);
        gen_buses_non_slack_ = std::move(gb);
    }

    const Network& net() const { return *net_; }
    int n_bus() const { return static_cast<int>(net_->buses.size()); }
    int n_gen() const { return static_cast<int>(net_->generators.size()); }
    int slack() const { return slack_; }
    int bus_pos(int bus_id) const {
        auto it = bus_pos_.find(bus_id);
        if (it == bus_pos_.end())
            throw Error("unknown bus id " + std::to_string(bus_id));
        return it->second;
    }
    int gen_bus(int g) const { return gen_bus_[g]; }
    const std::vector<int>& gens_at(int bus_index) const { return gens_at_[bus_index]; }
    const std::vector<int>& pv_buses() const { return pv_; }
    const std::vector<int>& pq_buses() const { return pq_; }
    const std::vector<int>& non_slack_gens() const { return non_slack_gens_; }
    const std::vector<int>& gen_buses_non_slack() const { return gen_buses_non_slack_; }

    // Slack voltage magnitude: the slack generator setpoint when present,
    // otherwise the bus initial magnitude.
    double slack_v() const {
        for (int g : gens_at_[slack_]) return net_->generators[g].v_setpoint;
        return net_->buses[slack_].v_init;
    }

private:
    const Network* net_;
    std::unordered_map<int, int> bus_pos_;
    std::vector<int> gen_bus_;
    std::vector<std::vector<int>> gens_at_;
    std::vector<int> pv_, pq_, non_slack_gens_, gen_buses_non_slack_;
    int slack_ = -1;
};

inline bool nearly_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Field-by-field equality, used by the round-trip checks. tol = 0 demands
// bit-identical values.
inline bool networks_equal(const Network& a, const Network& b, double tol = 0.0) {
    auto eq = [tol](double x, double y) {
        return tol == 0.0 ? x == y : nearly_equal(x, y, tol);
    };
    auto veq = [&eq](const std::vector<double>& x, const std::vector<double>& y) {
        if (x.size() != y.size()) return false;
        for (size_t i = 0; i < x.size(); ++i)
            if (!eq(x[i], y[i])) return false;
        return true;
    };
    if (!eq(a.base_mva, b.base_mva)) return false;
    if (a.buses.size() != b.buses.size() || a.generators.size() != b.generators.size() ||
        a.branches.size() != b.branches.size())
        return false;
    for (size_t i = 0; i < a.buses.size(); ++i) {
        const Bus &x = a.buses[i], &y = b.buses[i];
        if (x.id != y.id || x.kind != y.kind) return false;
        if (!eq(x.p_load, y.p_load) || !eq(x.q_load, y.q_load) ||
            !eq(x.g_shunt, y.g_shunt) || !eq(x.b_shunt, y.b_shunt) ||
            !eq(x.v_min, y.v_min) || !eq(x.v_max, y.v_max) ||
            !eq(x.delta_min, y.delta_min) || !eq(x.delta_max, y.delta_max) ||
            !eq(x.v_init, y.v_init) || !eq(x.delta_init, y.delta_init) ||
            !eq(x.area, y.area) || !eq(x.base_kv, y.base_kv) || !eq(x.zone, y.zone) ||
            !veq(x.extra, y.extra))
            return false;
    }
    for (size_t i = 0; i < a.generators.size(); ++i) {
        const Generator &x = a.generators[i], &y = b.generators[i];
        if (x.bus_id != y.bus_id || x.in_service != y.in_service) return false;
        if (!eq(x.p_min, y.p_min) || !eq(x.p_max, y.p_max) ||
            !eq(x.q_min, y.q_min) || !eq(x.q_max, y.q_max) ||
            !eq(x.v_setpoint, y.v_setpoint) || !eq(x.p_init, y.p_init) ||
            !eq(x.q_init, y.q_init) || !eq(x.mbase, y.mbase) ||
            !eq(x.cost_startup, y.cost_startup) ||
            !eq(x.cost_shutdown, y.cost_shutdown) ||
            !veq(x.cost.coefficients, y.cost.coefficients) || !veq(x.extra, y.extra))
            return false;
    }
    for (size_t i = 0; i < a.branches.size(); ++i) {
        const Branch &x = a.branches[i], &y = b.branches[i];
        if (x.from_bus != y.from_bus || x.to_bus != y.to_bus ||
            x.in_service != y.in_service)
            return false;
        if (!eq(x.r, y.r) || !eq(x.x, y.x) || !eq(x.b_charging, y.b_charging) ||
            !eq(x.tap, y.tap) || !eq(x.shift, y.shift) ||
            !eq(x.rate_mva, y.rate_mva) || !eq(x.rate_b, y.rate_b) ||
            !eq(x.rate_c, y.rate_c) || !veq(x.extra, y.extra))
            return false;
    }
    return true;
}

}  // namespace acopf
