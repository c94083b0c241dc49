// Newton-Raphson AC power flow in polar coordinates.
//
// Given real-power setpoints for non-slack generators, voltage targets at
// generator buses, and per-bus loads, solves the power flow equations for the
// remaining state (V at load buses, angles everywhere) and recovers reactive
// injections and the slack real injection. Bound violations are reported by
// the caller, never repaired here.
#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "acopf/admittance.hpp"
#include "acopf/common.hpp"
#include "acopf/grid.hpp"

namespace acopf {

struct PowerFlowState {
    Eigen::VectorXd v_mag;  // p.u.
    Eigen::VectorXd v_ang;  // rad
};

// Controls for one power-flow instance. p_gen/v_gen align with
// NetworkIndex::non_slack_gens() order; loads are per bus.
struct SetpointProfile {
    std::vector<double> p_gen;
    std::vector<double> v_gen;
    std::vector<double> p_load, q_load;

    static SetpointProfile from_case(const Network& net, const NetworkIndex& idx) {
        SetpointProfile sp;
        for (int g : idx.non_slack_gens()) {
            sp.p_gen.push_back(net.generators[g].p_init);
            sp.v_gen.push_back(net.generators[g].v_setpoint);
        }
        for (const Bus& b : net.buses) {
            sp.p_load.push_back(b.p_load);
            sp.q_load.push_back(b.q_load);
        }
        return sp;
    }
};

struct BranchFlow {
    Complex from_end, to_end;  // complex power, p.u.
};

struct PowerFlowSolution {
    PowerFlowState state;
    std::vector<double> q_gen;  // per generator, p.u.
    double p_slack = 0.0;       // total slack-bus generation, p.u.
    std::vector<BranchFlow> branch_flows;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 20;
};

namespace detail {

inline Eigen::SparseMatrix<Complex> spdiag(const Eigen::VectorXcd& v) {
    Eigen::SparseMatrix<Complex> d(v.size(), v.size());
    d.reserve(Eigen::VectorXi::Constant(static_cast<int>(v.size()), 1));
    for (int i = 0; i < v.size(); ++i) d.insert(i, i) = v[i];
    d.makeCompressed();
    return d;
}

inline Eigen::VectorXcd complex_voltage(const PowerFlowState& st) {
    Eigen::VectorXcd v(st.v_mag.size());
    for (int i = 0; i < v.size(); ++i) v[i] = std::polar(st.v_mag[i], st.v_ang[i]);
    return v;
}

}  // namespace detail

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> compute_injections(
    const Network& net, const AdmittanceMatrix& adm, const PowerFlowState& state) {
    if (state.v_mag.size() != adm.n || state.v_ang.size() != adm.n ||
        static_cast<int>(net.buses.size()) != adm.n)
        throw DimensionMismatch("state/admittance dimensions disagree");
    Eigen::VectorXcd v = detail::complex_voltage(state);
    Eigen::VectorXcd s = v.cwiseProduct((adm.ybus * v).conjugate());
    return {s.real(), s.imag()};
}

inline std::vector<BranchFlow> branch_flows(const Network& net,
                                            const AdmittanceMatrix& adm,
                                            const PowerFlowState& state) {
    Eigen::VectorXcd v = detail::complex_voltage(state);
    std::vector<BranchFlow> flows(adm.branches.size());
    for (size_t e = 0; e < adm.branches.size(); ++e) {
        const BranchAdmittance& ba = adm.branches[e];
        if (!ba.in_service) continue;
        Complex vf = v[ba.from], vt = v[ba.to];
        flows[e].from_end = vf * std::conj(ba.yff * vf + ba.yft * vt);
        flows[e].to_end = vt * std::conj(ba.ytf * vf + ba.ytt * vt);
    }
    return flows;
}

inline PowerFlowSolution solve_newton(const Network& net, const NetworkIndex& idx,
                                      const AdmittanceMatrix& adm,
                                      const SetpointProfile& sp,
                                      const PowerFlowOptions& opts = {},
                                      const PowerFlowState* init = nullptr) {
    const int n = idx.n_bus();
    if (static_cast<int>(sp.p_load.size()) != n ||
        static_cast<int>(sp.q_load.size()) != n)
        throw DimensionMismatch("load vectors must have one entry per bus");
    if (sp.p_gen.size() != idx.non_slack_gens().size() ||
        sp.v_gen.size() != idx.non_slack_gens().size())
        throw DimensionMismatch("setpoints must align with non-slack generators");

    // Specified net injections: P at every non-slack bus, Q at PQ buses.
    std::vector<double> p_spec(n, 0.0), q_spec(n, 0.0);
    std::vector<double> v_target(n, 1.0);
    for (int i = 0; i < n; ++i) {
        p_spec[i] = -sp.p_load[i];
        q_spec[i] = -sp.q_load[i];
    }
    for (size_t k = 0; k < idx.non_slack_gens().size(); ++k) {
        int g = idx.non_slack_gens()[k];
        int bus = idx.gen_bus(g);
        p_spec[bus] += sp.p_gen[k];
        if (idx.gens_at(bus).front() == g) v_target[bus] = sp.v_gen[k];
    }
    v_target[idx.slack()] = idx.slack_v();

    // Unknown layout: angles at non-slack buses, magnitudes at PQ buses.
    std::vector<int> a_of(n, -1), m_of(n, -1);
    std::vector<int> a_bus, m_bus;
    for (int i = 0; i < n; ++i) {
        if (i == idx.slack()) continue;
        a_of[i] = static_cast<int>(a_bus.size());
        a_bus.push_back(i);
    }
    for (int i : idx.pq_buses()) {
        m_of[i] = static_cast<int>(m_bus.size());
        m_bus.push_back(i);
    }
    const int na = static_cast<int>(a_bus.size());
    const int nm = static_cast<int>(m_bus.size());
    const int m = na + nm;

    PowerFlowSolution sol;
    sol.state.v_mag = Eigen::VectorXd::Ones(n);
    sol.state.v_ang = Eigen::VectorXd::Zero(n);
    if (init) sol.state = *init;
    for (int i = 0; i < n; ++i)
        if (i == idx.slack() || m_of[i] < 0) sol.state.v_mag[i] = v_target[i];
    sol.state.v_ang[idx.slack()] = 0.0;

    auto mismatch = [&](Eigen::VectorXd& f, Eigen::VectorXcd& v,
                        Eigen::VectorXcd& ibus) {
        v = detail::complex_voltage(sol.state);
        ibus = adm.ybus * v;
        Eigen::VectorXcd s = v.cwiseProduct(ibus.conjugate());
        f.resize(m);
        for (int k = 0; k < na; ++k) f[k] = s[a_bus[k]].real() - p_spec[a_bus[k]];
        for (int k = 0; k < nm; ++k)
            f[na + k] = s[m_bus[k]].imag() - q_spec[m_bus[k]];
    };

    Eigen::VectorXd f;
    Eigen::VectorXcd v, ibus;
    mismatch(f, v, ibus);
    sol.max_mismatch = m == 0 ? 0.0 : f.lpNorm<Eigen::Infinity>();

    while (!(sol.max_mismatch <= opts.tol) && sol.iterations < opts.max_iter) {
        if (!std::isfinite(sol.max_mismatch)) break;

        Eigen::VectorXcd vnorm(n);
        for (int i = 0; i < n; ++i)
            vnorm[i] = sol.state.v_mag[i] == 0.0 ? Complex(1, 0)
                                                 : v[i] / sol.state.v_mag[i];
        Eigen::SparseMatrix<Complex> dv = detail::spdiag(v);
        Eigen::SparseMatrix<Complex> di = detail::spdiag(ibus);
        Eigen::SparseMatrix<Complex> dvn = detail::spdiag(vnorm);
        Eigen::SparseMatrix<Complex> t1 = di - adm.ybus * dv;
        Eigen::SparseMatrix<Complex> t1c = t1.conjugate();
        Eigen::SparseMatrix<Complex> dsda = Complex(0, 1) * (dv * t1c);
        Eigen::SparseMatrix<Complex> t2 = adm.ybus * dvn;
        Eigen::SparseMatrix<Complex> t2c = t2.conjugate();
        Eigen::SparseMatrix<Complex> dic = di.conjugate();
        Eigen::SparseMatrix<Complex> dsdm = dv * t2c + dic * dvn;

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(4 * dsda.nonZeros());
        for (int col = 0; col < n; ++col) {
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(dsda, col); it; ++it) {
                int i = static_cast<int>(it.row());
                if (a_of[col] < 0) continue;
                if (a_of[i] >= 0)
                    trip.emplace_back(a_of[i], a_of[col], it.value().real());
                if (m_of[i] >= 0)
                    trip.emplace_back(na + m_of[i], a_of[col], it.value().imag());
            }
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(dsdm, col); it; ++it) {
                int i = static_cast<int>(it.row());
                if (m_of[col] < 0) continue;
                if (a_of[i] >= 0)
                    trip.emplace_back(a_of[i], na + m_of[col], it.value().real());
                if (m_of[i] >= 0)
                    trip.emplace_back(na + m_of[i], na + m_of[col],
                                      it.value().imag());
            }
        }
        Eigen::SparseMatrix<double> jac(m, m);
        jac.setFromTriplets(trip.begin(), trip.end());
        jac.makeCompressed();

        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(jac);
        if (lu.info() != Eigen::Success)
            throw SingularJacobian("power flow Jacobian is singular");
        Eigen::VectorXd dx = lu.solve(-f);
        if (!dx.allFinite())
            throw SingularJacobian("power flow Newton step is not finite");

        for (int k = 0; k < na; ++k) sol.state.v_ang[a_bus[k]] += dx[k];
        for (int k = 0; k < nm; ++k) sol.state.v_mag[m_bus[k]] += dx[na + k];
        ++sol.iterations;
        mismatch(f, v, ibus);
        sol.max_mismatch = f.lpNorm<Eigen::Infinity>();
    }
    sol.converged = std::isfinite(sol.max_mismatch) && sol.max_mismatch <= opts.tol;

    // Recover reactive injections at generator buses and the slack real power.
    Eigen::VectorXcd s = v.cwiseProduct(ibus.conjugate());
    sol.q_gen.assign(net.generators.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto& gens = idx.gens_at(i);
        if (gens.empty()) continue;
        double q_total = s[i].imag() + sp.q_load[i];
        double range_sum = 0.0;
        for (int g : gens)
            range_sum += net.generators[g].q_max - net.generators[g].q_min;
        for (int g : gens) {
            double w = range_sum > 0.0
                           ? (net.generators[g].q_max - net.generators[g].q_min) /
                                 range_sum
                           : 1.0 / static_cast<double>(gens.size());
            sol.q_gen[g] = q_total * w;
        }
    }
    sol.p_slack = s[idx.slack()].real() + sp.p_load[idx.slack()];
    sol.branch_flows = branch_flows(net, adm, sol.state);
    return sol;
}

inline PowerFlowSolution solve_newton(const Network& net, const SetpointProfile& sp,
                                      const PowerFlowOptions& opts = {}) {
    NetworkIndex idx(net);
    AdmittanceMatrix adm = build_admittance(net, idx);
    return solve_newton(net, idx, adm, sp, opts);
}

}  // namespace acopf
