// Bus admittance matrix assembly.
#pragma once

#include <complex>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "acopf/common.hpp"
#include "acopf/grid.hpp"

namespace acopf {

using Complex = std::complex<double>;

// Two-port admittance of one branch, in bus-position index space.
struct BranchAdmittance {
    int from = 0, to = 0;  // bus positions
    Complex yff, yft, ytf, ytt;
    bool in_service = true;
};

struct AdmittanceMatrix {
    Eigen::SparseMatrix<Complex> ybus;
    std::vector<BranchAdmittance> branches;  // parallel to Network::branches
    int n = 0;
};

inline AdmittanceMatrix build_admittance(const Network& net, const NetworkIndex& index) {
    AdmittanceMatrix out;
    out.n = index.n_bus();
    out.ybus.resize(out.n, out.n);
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(4 * net.branches.size() + net.buses.size());

    for (const Branch& br : net.branches) {
        BranchAdmittance ba;
        ba.from = index.bus_pos(br.from_bus);
        ba.to = index.bus_pos(br.to_bus);
        ba.in_service = br.in_service;
        if (br.in_service) {
            if (br.r == 0.0 && br.x == 0.0)
                throw SingularBranch("branch " + std::to_string(br.from_bus) + "-" +
                                     std::to_string(br.to_bus) + " has zero impedance");
            Complex ys = 1.0 / Complex(br.r, br.x);
            Complex ysh(0.0, br.b_charging / 2.0);
            Complex tap = std::polar(br.tap, br.shift);
            ba.yff = (ys + ysh) / (br.tap * br.tap);
            ba.yft = -ys / std::conj(tap);
            ba.ytf = -ys / tap;
            ba.ytt = ys + ysh;
            trip.emplace_back(ba.from, ba.from, ba.yff);
            trip.emplace_back(ba.from, ba.to, ba.yft);
            trip.emplace_back(ba.to, ba.from, ba.ytf);
            trip.emplace_back(ba.to, ba.to, ba.ytt);
        }
        out.branches.push_back(ba);
    }
    for (int i = 0; i < out.n; ++i) {
        const Bus& b = net.buses[i];
        if (b.g_shunt != 0.0 || b.b_shunt != 0.0)
            trip.emplace_back(i, i, Complex(b.g_shunt, b.b_shunt));
    }
    out.ybus.setFromTriplets(trip.begin(), trip.end());
    out.ybus.makeCompressed();
    return out;
}

inline AdmittanceMatrix build_admittance(const Network& net) {
    return build_admittance(net, NetworkIndex(net));
}

}  // namespace acopf
