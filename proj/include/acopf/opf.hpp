// AC optimal power flow: primal-dual interior-point solver, active-set
// extraction, legality checking, and warm-start construction.
//
// Formulation: minimize total polynomial generation cost subject to nodal
// power balance (equalities), box limits on generator P/Q, bus voltage
// magnitude and angle, and apparent-power branch limits at both ends
// (inequalities with slacks). The slack bus keeps its case-file magnitude and
// zero angle, so its voltage is not a decision variable.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acopf/admittance.hpp"
#include "acopf/common.hpp"
#include "acopf/grid.hpp"
#include "acopf/power_flow.hpp"

namespace acopf {

struct OpfOptions {
    double kkt_tol = 1e-6;
    int max_iter = 50;
    double barrier_reduction = 0.1;   // sigma
    double step_fraction = 0.995;     // fraction-to-boundary
    double active_eps = 1e-5;         // bound-activity tolerance
};

struct OpfSolution {
    PowerFlowState state;
    std::vector<double> p_gen, q_gen;  // per generator, p.u.; 0 if out of service
    double objective = 0.0;            // $/hr
    bool converged = false;
    int iterations = 0;
    double kkt_residual = std::numeric_limits<double>::infinity();
    std::vector<double> barrier_trace;  // barrier parameter per iteration
};

// One bit per box constraint: [G: P][G: Q][N: V][N: delta].
struct ActiveSetVector {
    std::vector<std::uint8_t> bits;

    std::size_t size() const { return bits.size(); }
    bool operator==(const ActiveSetVector& o) const { return bits == o.bits; }

    std::string to_string() const {
        std::string s(bits.size(), '0');
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i]) s[i] = '1';
        return s;
    }
    static ActiveSetVector from_string(const std::string& s) {
        ActiveSetVector v;
        v.bits.reserve(s.size());
        for (char c : s) {
            if (c != '0' && c != '1')
                throw Error("active-set string must be 0/1, got '" +
                            std::string(1, c) + "'");
            v.bits.push_back(c == '1');
        }
        return v;
    }
};

struct WarmStartHint {
    PowerFlowState state0;
    std::vector<double> p_gen0, q_gen0;  // per generator
    ActiveSetVector predicted_active;
};

struct Violation {
    std::string constraint;  // e.g. "gen[2].p", "bus[24].v", "branch[8].s_from"
    std::string bound;       // "lower" or "upper"
    double value = 0.0;
    double limit = 0.0;
};

struct LegalityReport {
    bool legal = false;
    bool pf_converged = false;
    std::vector<Violation> violations;
};

inline double evaluate_cost(const std::vector<Generator>& gens,
                            const std::vector<double>& p_gen) {
    if (gens.size() != p_gen.size())
        throw DimensionMismatch("evaluate_cost: one injection per generator");
    double total = 0.0;
    for (std::size_t i = 0; i < gens.size(); ++i)
        if (gens[i].in_service) total += gens[i].cost.eval(p_gen[i]);
    return total;
}

namespace detail {

inline bool default_angle_bounds(const Bus& b) {
    return b.delta_min == -std::numbers::pi && b.delta_max == std::numbers::pi;
}

// h = sgn * (x[var] - bound) <= 0; sgn = +1 upper, -1 lower.
struct BoxRow {
    int var;
    double bound;
    double sgn;
    int bit;  // ActiveSetVector slot, -1 if none
};

// Apparent-power limit at one branch end: h = P^2 + Q^2 - cap2.
struct FlowRow {
    int e;          // index into AdmittanceMatrix::branches
    bool from_end;
    double cap2;
};

class OpfProblem {
public:
    OpfProblem(const Network& net, const NetworkIndex& idx,
               const AdmittanceMatrix& adm, const OpfOptions& opts)
        : net_(net), idx_(idx), adm_(adm), opts_(opts) {
        nb_ = idx.n_bus();
        ang_of_.assign(nb_, -1);
        vm_of_.assign(nb_, -1);
        for (int i = 0; i < nb_; ++i) {
            if (i == idx.slack()) continue;
            ang_of_[i] = static_cast<int>(var_bus_.size());
            var_bus_.push_back(i);
        }
        na_ = static_cast<int>(var_bus_.size());
        for (int i = 0; i < nb_; ++i)
            if (i != idx.slack()) vm_of_[i] = na_ + ang_of_[i];
        for (int g = 0; g < idx.n_gen(); ++g)
            if (net.generators[g].in_service) act_.push_back(g);
        nga_ = static_cast<int>(act_.size());
        p_var0_ = 2 * na_;
        q_var0_ = 2 * na_ + nga_;
        nx_ = 2 * na_ + 2 * nga_;
        neq_ = 2 * nb_;

        const int n_gen = idx.n_gen();
        for (int k = 0; k < nga_; ++k) {
            const Generator& g = net.generators[act_[k]];
            box_.push_back({p_var0_ + k, g.p_max, +1.0, act_[k]});
            box_.push_back({p_var0_ + k, g.p_min, -1.0, act_[k]});
        }
        for (int k = 0; k < nga_; ++k) {
            const Generator& g = net.generators[act_[k]];
            box_.push_back({q_var0_ + k, g.q_max, +1.0, n_gen + act_[k]});
            box_.push_back({q_var0_ + k, g.q_min, -1.0, n_gen + act_[k]});
        }
        for (int i = 0; i < nb_; ++i) {
            if (i == idx.slack()) continue;
            const Bus& b = net.buses[i];
            box_.push_back({vm_of_[i], b.v_max, +1.0, 2 * n_gen + i});
            box_.push_back({vm_of_[i], b.v_min, -1.0, 2 * n_gen + i});
            if (!default_angle_bounds(b)) {
                box_.push_back({ang_of_[i], b.delta_max, +1.0, 2 * n_gen + nb_ + i});
                box_.push_back({ang_of_[i], b.delta_min, -1.0, 2 * n_gen + nb_ + i});
            }
        }
        for (std::size_t e = 0; e < net.branches.size(); ++e) {
            const Branch& br = net.branches[e];
            if (!br.in_service || br.rate_mva <= 0.0) continue;
            double cap = br.rate_mva / net.base_mva;
            flow_.push_back({static_cast<int>(e), true, cap * cap});
            flow_.push_back({static_cast<int>(e), false, cap * cap});
        }
        niq_ = static_cast<int>(box_.size() + flow_.size());
    }

    int nx() const { return nx_; }
    int neq() const { return neq_; }
    int niq() const { return niq_; }
    int p_var(int k) const { return p_var0_ + k; }
    int q_var(int k) const { return q_var0_ + k; }
    const std::vector<int>& active_gens() const { return act_; }
    const std::vector<BoxRow>& box_rows() const { return box_; }

    PowerFlowState make_state(const Eigen::VectorXd& x) const {
        PowerFlowState st;
        st.v_mag = Eigen::VectorXd::Ones(nb_);
        st.v_ang = Eigen::VectorXd::Zero(nb_);
        st.v_mag[idx_.slack()] = idx_.slack_v();
        for (int k = 0; k < na_; ++k) {
            st.v_ang[var_bus_[k]] = x[k];
            st.v_mag[var_bus_[k]] = x[na_ + k];
        }
        return st;
    }

    Eigen::VectorXd cold_x0() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nx_);
        for (int k = 0; k < na_; ++k) {
            const Bus& b = net_.buses[var_bus_[k]];
            double v = 1.0;
            if (v < b.v_min || v > b.v_max) v = 0.5 * (b.v_min + b.v_max);
            x[na_ + k] = v;
        }
        for (int k = 0; k < nga_; ++k) {
            const Generator& g = net_.generators[act_[k]];
            x[p_var0_ + k] = 0.5 * (g.p_min + g.p_max);
            x[q_var0_ + k] = 0.5 * (g.q_min + g.q_max);
        }
        return x;
    }

    Eigen::VectorXd x_from_hint(const WarmStartHint& warm) const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nx_);
        for (int k = 0; k < na_; ++k) {
            x[k] = warm.state0.v_ang[var_bus_[k]];
            x[na_ + k] = warm.state0.v_mag[var_bus_[k]];
        }
        for (int k = 0; k < nga_; ++k) {
            x[p_var0_ + k] = warm.p_gen0[act_[k]];
            x[q_var0_ + k] = warm.q_gen0[act_[k]];
        }
        return x;
    }

    double objective(const Eigen::VectorXd& x) const {
        double f = 0.0;
        for (int k = 0; k < nga_; ++k)
            f += net_.generators[act_[k]].cost.eval(x[p_var0_ + k]);
        return f;
    }

    struct Eval {
        double f = 0.0;
        Eigen::VectorXd grad_f;
        Eigen::VectorXd g;
        Eigen::MatrixXd jg;
        Eigen::VectorXd h;
        Eigen::MatrixXd jh;
    };

    Eval evaluate(const Eigen::VectorXd& x) const {
        Eval ev;
        PowerFlowState st = make_state(x);
        Eigen::VectorXcd v = complex_voltage(st);
        Eigen::VectorXcd ibus = adm_.ybus * v;
        Eigen::VectorXcd s = v.cwiseProduct(ibus.conjugate());

        ev.f = objective(x);
        ev.grad_f = Eigen::VectorXd::Zero(nx_);
        for (int k = 0; k < nga_; ++k)
            ev.grad_f[p_var0_ + k] =
                net_.generators[act_[k]].cost.deriv(x[p_var0_ + k]);

        // Power balance: calculated injection + load - generation = 0.
        ev.g.resize(neq_);
        for (int i = 0; i < nb_; ++i) {
            ev.g[i] = s[i].real() + net_.buses[i].p_load;
            ev.g[nb_ + i] = s[i].imag() + net_.buses[i].q_load;
        }
        for (int k = 0; k < nga_; ++k) {
            int bus = idx_.gen_bus(act_[k]);
            ev.g[bus] -= x[p_var0_ + k];
            ev.g[nb_ + bus] -= x[q_var0_ + k];
        }

        ev.jg = Eigen::MatrixXd::Zero(neq_, nx_);
        {
            Eigen::VectorXcd vnorm(nb_);
            for (int i = 0; i < nb_; ++i)
                vnorm[i] = st.v_mag[i] == 0.0 ? Complex(1, 0) : v[i] / st.v_mag[i];
            Eigen::SparseMatrix<Complex> dv = spdiag(v);
            Eigen::SparseMatrix<Complex> di = spdiag(ibus);
            Eigen::SparseMatrix<Complex> dvn = spdiag(vnorm);
            Eigen::SparseMatrix<Complex> t1 = di - adm_.ybus * dv;
            Eigen::SparseMatrix<Complex> t1c = t1.conjugate();
            Eigen::SparseMatrix<Complex> dsda = Complex(0, 1) * (dv * t1c);
            Eigen::SparseMatrix<Complex> t2 = adm_.ybus * dvn;
            Eigen::SparseMatrix<Complex> t2c = t2.conjugate();
            Eigen::SparseMatrix<Complex> dic = di.conjugate();
            Eigen::SparseMatrix<Complex> dsdm = dv * t2c + dic * dvn;
            for (int col = 0; col < nb_; ++col) {
                if (ang_of_[col] >= 0)
                    for (Eigen::SparseMatrix<Complex>::InnerIterator it(dsda, col);
                         it; ++it) {
                        ev.jg(it.row(), ang_of_[col]) = it.value().real();
                        ev.jg(nb_ + it.row(), ang_of_[col]) = it.value().imag();
                    }
                if (vm_of_[col] >= 0)
                    for (Eigen::SparseMatrix<Complex>::InnerIterator it(dsdm, col);
                         it; ++it) {
                        ev.jg(it.row(), vm_of_[col]) = it.value().real();
                        ev.jg(nb_ + it.row(), vm_of_[col]) = it.value().imag();
                    }
            }
        }
        for (int k = 0; k < nga_; ++k) {
            int bus = idx_.gen_bus(act_[k]);
            ev.jg(bus, p_var0_ + k) = -1.0;
            ev.jg(nb_ + bus, q_var0_ + k) = -1.0;
        }

        ev.h.resize(niq_);
        ev.jh = Eigen::MatrixXd::Zero(niq_, nx_);
        int r = 0;
        for (const BoxRow& row : box_) {
            ev.h[r] = row.sgn * (x[row.var] - row.bound);
            ev.jh(r, row.var) = row.sgn;
            ++r;
        }
        for (const FlowRow& fr : flow_) {
            FlowLocal fl = flow_local(fr, st);
            ev.h[r] = fl.p * fl.p + fl.q * fl.q - fr.cap2;
            double gh[3];  // d h / d [Vi, Vj, phi]
            for (int a = 0; a < 3; ++a)
                gh[a] = 2.0 * (fl.p * fl.dp[a] + fl.q * fl.dq[a]);
            add_local_grad(ev.jh, r, fl, gh);
            ++r;
        }
        return ev;
    }

    // Hessian of f + lam'g + mu_flow' h_flow (box rows are linear).
    Eigen::MatrixXd lagrangian_hessian(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& lam,
                                       const Eigen::VectorXd& mu) const {
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(nx_, nx_);
        for (int k = 0; k < nga_; ++k)
            hess(p_var0_ + k, p_var0_ + k) =
                net_.generators[act_[k]].cost.second_deriv(x[p_var0_ + k]);

        PowerFlowState st = make_state(x);
        const Eigen::VectorXd& vm = st.v_mag;
        const Eigen::VectorXd& ang = st.v_ang;

        // Nodal balance terms, accumulated pairwise over Y-bus nonzeros.
        for (int col = 0; col < nb_; ++col) {
            for (Eigen::SparseMatrix<Complex>::InnerIterator it(adm_.ybus, col); it;
                 ++it) {
                int i = static_cast<int>(it.row());
                int k = col;
                double wp = lam[i], wq = lam[nb_ + i];
                double gik = it.value().real(), bik = it.value().imag();
                if (i == k) {
                    if (vm_of_[i] >= 0)
                        hess(vm_of_[i], vm_of_[i]) += 2.0 * (wp * gik - wq * bik);
                    continue;
                }
                double th = ang[i] - ang[k];
                double ct = std::cos(th), sn = std::sin(th);
                double t = gik * ct + bik * sn;   // T_ik
                double u = gik * sn - bik * ct;   // U_ik
                // Second partials of wp*Vi*Vk*T + wq*Vi*Vk*U over (Vi, Vk, th).
                double h_vv = wp * t + wq * u;
                double h_vi_th = vm[k] * (-wp * u + wq * t);
                double h_vk_th = vm[i] * (-wp * u + wq * t);
                double h_thth = vm[i] * vm[k] * (-wp * t - wq * u);
                int vi = vm_of_[i], vk = vm_of_[k];
                int ai = ang_of_[i], ak = ang_of_[k];
                auto add = [&hess](int a, int b, double val) {
                    if (a >= 0 && b >= 0) hess(a, b) += val;
                };
                add(vi, vk, h_vv);
                add(vk, vi, h_vv);
                add(vi, ai, h_vi_th);
                add(ai, vi, h_vi_th);
                add(vi, ak, -h_vi_th);
                add(ak, vi, -h_vi_th);
                add(vk, ai, h_vk_th);
                add(ai, vk, h_vk_th);
                add(vk, ak, -h_vk_th);
                add(ak, vk, -h_vk_th);
                add(ai, ai, h_thth);
                add(ak, ak, h_thth);
                add(ai, ak, -h_thth);
                add(ak, ai, -h_thth);
            }
        }

        // Branch flow limit terms.
        int r = static_cast<int>(box_.size());
        for (const FlowRow& fr : flow_) {
            double w = mu[r++];
            if (w == 0.0) continue;
            FlowLocal fl = flow_local(fr, st);
            double hp[3][3] = {{2.0 * fl.g1, fl.a, -fl.vj * fl.b},
                               {fl.a, 0.0, -fl.vi * fl.b},
                               {-fl.vj * fl.b, -fl.vi * fl.b, -fl.vi * fl.vj * fl.a}};
            double hq[3][3] = {{2.0 * fl.b1, fl.b, fl.vj * fl.a},
                               {fl.b, 0.0, fl.vi * fl.a},
                               {fl.vj * fl.a, fl.vi * fl.a, -fl.vi * fl.vj * fl.b}};
            // grad and Hessian of h = P^2 + Q^2 - cap2 over (Vi, Vj, phi).
            double hh[3][3];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    hh[a][b] = 2.0 * (fl.dp[a] * fl.dp[b] + fl.p * hp[a][b] +
                                      fl.dq[a] * fl.dq[b] + fl.q * hq[a][b]);
            int slots[3][2];
            double coef[3][2];
            local_expansion(fl, slots, coef);
            for (int a = 0; a < 3; ++a)
                for (int ea = 0; ea < 2; ++ea) {
                    if (slots[a][ea] < 0 || coef[a][ea] == 0.0) continue;
                    for (int b = 0; b < 3; ++b)
                        for (int eb = 0; eb < 2; ++eb) {
                            if (slots[b][eb] < 0 || coef[b][eb] == 0.0) continue;
                            hess(slots[a][ea], slots[b][eb]) +=
                                w * coef[a][ea] * coef[b][eb] * hh[a][b];
                        }
                }
        }
        return hess;
    }

private:
    struct FlowLocal {
        int bi, bj;          // end bus, far bus (positions)
        double vi, vj, phi;  // magnitudes and angle difference
        double g1, b1;       // Re/Im of conj(self admittance)
        double a, b;         // A(phi), B(phi)
        double p, q;
        double dp[3], dq[3];  // gradients over (Vi, Vj, phi)
    };

    FlowLocal flow_local(const FlowRow& fr, const PowerFlowState& st) const {
        const BranchAdmittance& ba = adm_.branches[fr.e];
        FlowLocal fl;
        Complex c1, c2;
        if (fr.from_end) {
            fl.bi = ba.from;
            fl.bj = ba.to;
            c1 = std::conj(ba.yff);
            c2 = std::conj(ba.yft);
        } else {
            fl.bi = ba.to;
            fl.bj = ba.from;
            c1 = std::conj(ba.ytt);
            c2 = std::conj(ba.ytf);
        }
        fl.vi = st.v_mag[fl.bi];
        fl.vj = st.v_mag[fl.bj];
        fl.phi = st.v_ang[fl.bi] - st.v_ang[fl.bj];
        fl.g1 = c1.real();
        fl.b1 = c1.imag();
        double cp = std::cos(fl.phi), sp = std::sin(fl.phi);
        fl.a = c2.real() * cp - c2.imag() * sp;
        fl.b = c2.real() * sp + c2.imag() * cp;
        fl.p = fl.vi * fl.vi * fl.g1 + fl.vi * fl.vj * fl.a;
        fl.q = fl.vi * fl.vi * fl.b1 + fl.vi * fl.vj * fl.b;
        fl.dp[0] = 2.0 * fl.vi * fl.g1 + fl.vj * fl.a;
        fl.dp[1] = fl.vi * fl.a;
        fl.dp[2] = -fl.vi * fl.vj * fl.b;
        fl.dq[0] = 2.0 * fl.vi * fl.b1 + fl.vj * fl.b;
        fl.dq[1] = fl.vi * fl.b;
        fl.dq[2] = fl.vi * fl.vj * fl.a;
        return fl;
    }

    // Local coordinates (Vi, Vj, phi) expand to at most two global slots each:
    // phi = ang_i - ang_j.
    void local_expansion(const FlowLocal& fl, int slots[3][2],
                         double coef[3][2]) const {
        slots[0][0] = vm_of_[fl.bi];
        coef[0][0] = 1.0;
        slots[0][1] = -1;
        coef[0][1] = 0.0;
        slots[1][0] = vm_of_[fl.bj];
        coef[1][0] = 1.0;
        slots[1][1] = -1;
        coef[1][1] = 0.0;
        slots[2][0] = ang_of_[fl.bi];
        coef[2][0] = 1.0;
        slots[2][1] = ang_of_[fl.bj];
        coef[2][1] = -1.0;
    }

    void add_local_grad(Eigen::MatrixXd& jh, int row, const FlowLocal& fl,
                        const double grad[3]) const {
        int slots[3][2];
        double coef[3][2];
        local_expansion(fl, slots, coef);
        for (int a = 0; a < 3; ++a)
            for (int ea = 0; ea < 2; ++ea)
                if (slots[a][ea] >= 0 && coef[a][ea] != 0.0)
                    jh(row, slots[a][ea]) += coef[a][ea] * grad[a];
    }

    const Network& net_;
    const NetworkIndex& idx_;
    const AdmittanceMatrix& adm_;
    OpfOptions opts_;
    int nb_ = 0, na_ = 0, nga_ = 0, nx_ = 0, neq_ = 0, niq_ = 0;
    int p_var0_ = 0, q_var0_ = 0;
    std::vector<int> ang_of_, vm_of_, var_bus_, act_;
    std::vector<BoxRow> box_;
    std::vector<FlowRow> flow_;
};

inline OpfSolution run_interior_point(const Network& net, const NetworkIndex& idx,
                                      const AdmittanceMatrix& adm,
                                      const OpfOptions& opts,
                                      const WarmStartHint* warm) {
    OpfProblem prob(net, idx, adm, opts);
    const int nx = prob.nx(), neq = prob.neq(), niq = prob.niq();
    const double sigma = opts.barrier_reduction;
    const double xi = opts.step_fraction;

    Eigen::VectorXd x = warm ? prob.x_from_hint(*warm) : prob.cold_x0();
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(neq);
    Eigen::VectorXd z(niq), mu(niq);
    {
        OpfProblem::Eval ev0 = prob.evaluate(x);
        for (int r = 0; r < niq; ++r) z[r] = std::max(1.0, -ev0.h[r]);
        // Box slacks start at midpoint distance whether or not a hint pinned
        // the variable: a near-zero slack starves the fraction-to-boundary
        // rule and stalls the first Newton steps, so a prediction informs the
        // primal point only and the duals stay centered.
        const auto& rows = prob.box_rows();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const BoxRow& row = rows[r];
            // Row pairs share a variable; range from the matching bounds.
            double range = row.sgn > 0 ? row.bound - rows[r + 1].bound
                                       : rows[r - 1].bound - row.bound;
            z[r] = std::max(range / 2.0, 1e-3);
        }
        for (int r = 0; r < niq; ++r)
            mu[r] = std::clamp(1.0 / z[r], 1e-8, 1e6);
    }

    OpfSolution sol;
    double gamma = std::numeric_limits<double>::infinity();
    double fprev = prob.objective(x);
    OpfProblem::Eval ev;
    double feascond = 0, gradcond = 0, compcond = 0, costcond = 0;

    for (int iter = 0;; ++iter) {
        ev = prob.evaluate(x);
        Eigen::VectorXd lx = ev.grad_f + ev.jg.transpose() * lam +
                             ev.jh.transpose() * mu;
        double gnorm = neq ? ev.g.lpNorm<Eigen::Infinity>() : 0.0;
        double hmax = niq ? ev.h.maxCoeff() : 0.0;
        double xnorm = nx ? x.lpNorm<Eigen::Infinity>() : 0.0;
        double znorm = niq ? z.lpNorm<Eigen::Infinity>() : 0.0;
        double dualnorm = std::max(neq ? lam.lpNorm<Eigen::Infinity>() : 0.0,
                                   niq ? mu.lpNorm<Eigen::Infinity>() : 0.0);
        feascond = std::max(gnorm, hmax) / (1.0 + std::max(xnorm, znorm));
        gradcond = (nx ? lx.lpNorm<Eigen::Infinity>() : 0.0) / (1.0 + dualnorm);
        compcond = (niq ? z.dot(mu) : 0.0) / (1.0 + xnorm);
        costcond = std::abs(ev.f - fprev) / (1.0 + std::abs(fprev));
        sol.kkt_residual = std::max({feascond, gradcond, compcond});

        if (feascond < opts.kkt_tol && gradcond < opts.kkt_tol &&
            compcond < opts.kkt_tol && costcond < opts.kkt_tol) {
            sol.converged = true;
            break;
        }
        if (iter >= opts.max_iter || !std::isfinite(sol.kkt_residual)) break;

        if (niq) {
            gamma = std::min(gamma, sigma * z.dot(mu) / niq);
            sol.barrier_trace.push_back(gamma);
        }

        Eigen::VectorXd zinv = z.cwiseInverse();
        Eigen::VectorXd muz = mu.cwiseProduct(zinv);
        Eigen::MatrixXd m = prob.lagrangian_hessian(x, lam, mu);
        if (niq) m.noalias() += ev.jh.transpose() * muz.asDiagonal() * ev.jh;

        Eigen::VectorXd hz = ev.h + z;
        Eigen::VectorXd rx = -(ev.grad_f + ev.jg.transpose() * lam);
        if (niq)
            rx -= ev.jh.transpose() *
                  (gamma * zinv + muz.cwiseProduct(hz)).matrix();

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nx + neq, nx + neq);
        kkt.topLeftCorner(nx, nx) = m;
        kkt.topRightCorner(nx, neq) = ev.jg.transpose();
        kkt.bottomLeftCorner(neq, nx) = ev.jg;
        Eigen::VectorXd rhs(nx + neq);
        rhs.head(nx) = rx;
        rhs.tail(neq) = -ev.g;

        Eigen::VectorXd step = kkt.partialPivLu().solve(rhs);
        if (!step.allFinite()) break;
        Eigen::VectorXd dx = step.head(nx);
        Eigen::VectorXd dlam = step.tail(neq);
        Eigen::VectorXd jhdx = ev.jh * dx;
        Eigen::VectorXd dz = -hz - jhdx;
        Eigen::VectorXd dmu =
            gamma * zinv - mu + muz.cwiseProduct(hz) + muz.cwiseProduct(jhdx);

        double alpha_p = 1.0, alpha_d = 1.0;
        for (int r = 0; r < niq; ++r) {
            if (dz[r] < 0.0) alpha_p = std::min(alpha_p, -xi * z[r] / dz[r]);
            if (dmu[r] < 0.0) alpha_d = std::min(alpha_d, -xi * mu[r] / dmu[r]);
        }
        x += alpha_p * dx;
        z += alpha_p * dz;
        lam += alpha_d * dlam;
        mu += alpha_d * dmu;
        fprev = ev.f;
        sol.iterations = iter + 1;
    }

    sol.state = prob.make_state(x);
    sol.p_gen.assign(net.generators.size(), 0.0);
    sol.q_gen.assign(net.generators.size(), 0.0);
    const auto& act = prob.active_gens();
    for (std::size_t k = 0; k < act.size(); ++k) {
        sol.p_gen[act[k]] = x[prob.p_var(static_cast<int>(k))];
        sol.q_gen[act[k]] = x[prob.q_var(static_cast<int>(k))];
    }
    sol.objective = evaluate_cost(net.generators, sol.p_gen);
    return sol;
}

}  // namespace detail

inline OpfSolution solve_acopf(const Network& net, const NetworkIndex& idx,
                               const AdmittanceMatrix& adm,
                               const OpfOptions& opts = {},
                               const WarmStartHint* warm = nullptr) {
    return detail::run_interior_point(net, idx, adm, opts, warm);
}

inline OpfSolution solve_acopf(const Network& net, const OpfOptions& opts = {},
                               const WarmStartHint* warm = nullptr) {
    NetworkIndex idx(net);
    AdmittanceMatrix adm = build_admittance(net, idx);
    return detail::run_interior_point(net, idx, adm, opts, warm);
}

inline ActiveSetVector extract_active_set(const Network& net,
                                          const OpfSolution& sol,
                                          double active_eps) {
    if (!sol.converged)
        throw NotConverged("active set requires a converged solution");
    NetworkIndex idx(net);
    const int ng = idx.n_gen(), nb = idx.n_bus();
    ActiveSetVector as;
    as.bits.assign(2 * ng + 2 * nb, 0);
    auto at_bound = [active_eps](double x, double lb, double ub) {
        double tol = active_eps * std::max(1.0, ub - lb);
        return std::min(x - lb, ub - x) <= tol;
    };
    for (int g = 0; g < ng; ++g) {
        const Generator& gen = net.generators[g];
        if (!gen.in_service) continue;
        as.bits[g] = at_bound(sol.p_gen[g], gen.p_min, gen.p_max);
        as.bits[ng + g] = at_bound(sol.q_gen[g], gen.q_min, gen.q_max);
    }
    for (int i = 0; i < nb; ++i) {
        const Bus& b = net.buses[i];
        as.bits[2 * ng + i] = at_bound(sol.state.v_mag[i], b.v_min, b.v_max);
        if (!detail::default_angle_bounds(b))
            as.bits[2 * ng + nb + i] =
                at_bound(sol.state.v_ang[i], b.delta_min, b.delta_max);
    }
    return as;
}

namespace detail {

inline void check_bounds(std::vector<Violation>& out, const std::string& name,
                         double value, double lb, double ub, double tol_rel) {
    double scale = std::max({1.0, std::abs(lb), std::abs(ub)});
    if (value > ub + tol_rel * scale) out.push_back({name, "upper", value, ub});
    if (value < lb - tol_rel * scale) out.push_back({name, "lower", value, lb});
}

}  // namespace detail

// Per-generator real power implied by setpoints plus a solved power flow:
// non-slack generators take their setpoint, slack-bus generators split the
// recovered residual in proportion to capacity range.
inline std::vector<double> recover_p_gen(const Network& net,
                                         const NetworkIndex& idx,
                                         const SetpointProfile& sp,
                                         const PowerFlowSolution& pf) {
    std::vector<double> p_gen(net.generators.size(), 0.0);
    const auto& ns = idx.non_slack_gens();
    for (std::size_t k = 0; k < ns.size(); ++k) p_gen[ns[k]] = sp.p_gen[k];
    const auto& sg = idx.gens_at(idx.slack());
    double range_sum = 0.0;
    for (int g : sg)
        range_sum += net.generators[g].p_max - net.generators[g].p_min;
    for (int g : sg) {
        double w = range_sum > 0.0
                       ? (net.generators[g].p_max - net.generators[g].p_min) /
                             range_sum
                       : 1.0 / static_cast<double>(sg.size());
        p_gen[g] = pf.p_slack * w;
    }
    return p_gen;
}

// Runs a power flow from the given setpoints and checks every operating
// limit with relative slack tol_rel. Optionally hands back the power-flow
// solution so callers can price the recovered dispatch.
inline LegalityReport check_legality(const Network& net, const NetworkIndex& idx,
                                     const AdmittanceMatrix& adm,
                                     const SetpointProfile& sp, double tol_rel,
                                     PowerFlowSolution* pf_out = nullptr) {
    LegalityReport rep;
    PowerFlowSolution pf = solve_newton(net, idx, adm, sp);
    rep.pf_converged = pf.converged;
    if (pf_out) *pf_out = pf;
    if (!pf.converged) {
        rep.legal = false;
        return rep;
    }

    std::vector<double> p_gen = recover_p_gen(net, idx, sp, pf);

    for (int g = 0; g < idx.n_gen(); ++g) {
        const Generator& gen = net.generators[g];
        if (!gen.in_service) continue;
        std::string tag = "gen[" + std::to_string(g) + "]";
        detail::check_bounds(rep.violations, tag + ".p", p_gen[g], gen.p_min,
                             gen.p_max, tol_rel);
        detail::check_bounds(rep.violations, tag + ".q", pf.q_gen[g], gen.q_min,
                             gen.q_max, tol_rel);
    }
    for (int i = 0; i < idx.n_bus(); ++i) {
        const Bus& b = net.buses[i];
        std::string tag = "bus[" + std::to_string(b.id) + "]";
        detail::check_bounds(rep.violations, tag + ".v", pf.state.v_mag[i],
                             b.v_min, b.v_max, tol_rel);
        detail::check_bounds(rep.violations, tag + ".delta", pf.state.v_ang[i],
                             b.delta_min, b.delta_max, tol_rel);
    }
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        const Branch& br = net.branches[e];
        if (!br.in_service || br.rate_mva <= 0.0) continue;
        double cap = br.rate_mva / net.base_mva;
        double scale = std::max(1.0, cap);
        std::string tag = "branch[" + std::to_string(e) + "](" +
                          std::to_string(br.from_bus) + "-" +
                          std::to_string(br.to_bus) + ")";
        double sf = std::abs(pf.branch_flows[e].from_end);
        double st = std::abs(pf.branch_flows[e].to_end);
        if (sf > cap + tol_rel * scale)
            rep.violations.push_back({tag + ".s_from", "upper", sf, cap});
        if (st > cap + tol_rel * scale)
            rep.violations.push_back({tag + ".s_to", "upper", st, cap});
    }
    rep.legal = rep.pf_converged && rep.violations.empty();
    return rep;
}

inline LegalityReport check_legality(const Network& net, const SetpointProfile& sp,
                                     double tol_rel,
                                     PowerFlowSolution* pf_out = nullptr) {
    NetworkIndex idx(net);
    AdmittanceMatrix adm = build_admittance(net, idx);
    return check_legality(net, idx, adm, sp, tol_rel, pf_out);
}

inline WarmStartHint warm_start_from_active_set(const Network& net,
                                                const ActiveSetVector& pred,
                                                const SetpointProfile& base_sp) {
    NetworkIndex idx(net);
    const int ng = idx.n_gen(), nb = idx.n_bus();
    if (pred.size() != static_cast<std::size_t>(2 * ng + 2 * nb))
        throw DimensionMismatch("active-set vector must have 2G+2N bits");

    WarmStartHint hint;
    hint.predicted_active = pred;
    hint.state0.v_mag = Eigen::VectorXd::Ones(nb);
    hint.state0.v_ang = Eigen::VectorXd::Zero(nb);
    hint.state0.v_mag[idx.slack()] = idx.slack_v();

    // Base-case real power per generator, used to evaluate the cost gradient
    // that picks which bound an active variable starts on.
    std::vector<double> p_base(ng, 0.0);
    const auto& ns = idx.non_slack_gens();
    for (std::size_t k = 0; k < ns.size(); ++k)
        p_base[ns[k]] = k < base_sp.p_gen.size() ? base_sp.p_gen[k] : 0.0;
    for (int g : idx.gens_at(idx.slack())) p_base[g] = net.generators[g].p_init;

    hint.p_gen0.assign(ng, 0.0);
    hint.q_gen0.assign(ng, 0.0);
    for (int g = 0; g < ng; ++g) {
        const Generator& gen = net.generators[g];
        if (!gen.in_service) continue;
        if (pred.bits[g]) {
            // Positive cost slope: the optimizer is pushed toward the lower
            // bound; non-positive (ties) default to the upper bound.
            double slope = gen.cost.deriv(p_base[g]);
            hint.p_gen0[g] = slope > 0.0 ? gen.p_min : gen.p_max;
        } else {
            hint.p_gen0[g] = 0.5 * (gen.p_min + gen.p_max);
        }
        hint.q_gen0[g] =
            pred.bits[ng + g] ? gen.q_max : 0.5 * (gen.q_min + gen.q_max);
    }
    for (int i = 0; i < nb; ++i) {
        if (i == idx.slack()) continue;
        const Bus& b = net.buses[i];
        if (pred.bits[2 * ng + i]) hint.state0.v_mag[i] = b.v_max;
        if (pred.bits[2 * ng + nb + i] && !detail::default_angle_bounds(b))
            hint.state0.v_ang[i] = b.delta_max;
    }
    return hint;
}

// SetpointProfile carrying an OPF solution's controls, for legality checks
// and dataset targets.
inline SetpointProfile setpoints_from_solution(const Network& net,
                                               const NetworkIndex& idx,
                                               const OpfSolution& sol) {
    SetpointProfile sp;
    for (int g : idx.non_slack_gens()) {
        sp.p_gen.push_back(sol.p_gen[g]);
        sp.v_gen.push_back(sol.state.v_mag[idx.gen_bus(g)]);
    }
    for (const Bus& b : net.buses) {
        sp.p_load.push_back(b.p_load);
        sp.q_load.push_back(b.q_load);
    }
    return sp;
}

}  // namespace acopf
