#include "cpal/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpal/errors.hpp"

namespace cpal {

Matrix jacobian(const Valuations& v, const ReducedTree& t, double beta) {
    if (v.size() != t.n_classes())
        throw ValidationError("valuation vector length does not match class count");
    if (!(beta >= 0.0) || std::isinf(beta))
        throw ValidationError("beta must be finite and nonnegative");

    const std::size_t n = t.n_classes();
    const std::size_t ns = t.states.size();

    // Per-state softmax over members, max-shifted.
    std::vector<std::vector<double>> sigma(ns);
    std::vector<double> lse(ns);
    for (std::size_t si = 0; si < ns; ++si) {
        const auto& st = t.states[si];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m : st.members) best = std::max(best, beta * v[m]);
        double sum = 0.0;
        sigma[si].resize(st.members.size());
        for (std::size_t pos = 0; pos < st.members.size(); ++pos) {
            sigma[si][pos] = std::exp(beta * v[st.members[pos]] - best);
            sum += sigma[si][pos];
        }
        for (double& x : sigma[si]) x /= sum;
        lse[si] = best + std::log(sum);
    }

    auto incidence = t.incidence();

    // g and the relative state weights w(si) = p*sigma_s / D_s, computed with
    // the same per-class log rescaling as g_map so D_s never underflows.
    Valuations g(n);
    std::vector<std::vector<double>> relw(n);
    for (std::size_t s = 0; s < n; ++s) {
        double max_log = -std::numeric_limits<double>::infinity();
        for (const auto& [si, pos] : incidence[s])
            max_log = std::max(max_log, beta * v[s] - lse[si] + std::log(t.states[si].prob));
        double num = 0.0, den = 0.0;
        relw[s].resize(incidence[s].size());
        for (std::size_t idx = 0; idx < incidence[s].size(); ++idx) {
            auto [si, pos] = incidence[s][idx];
            double w = std::exp(beta * v[s] - lse[si] + std::log(t.states[si].prob) - max_log);
            relw[s][idx] = w;
            num += w * t.payoff(si, pos);
            den += w;
        }
        g[s] = num / den;
        for (double& w : relw[s]) w /= den;
    }

    Matrix J(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t idx = 0; idx < incidence[s].size(); ++idx) {
            auto [si, pos] = incidence[s][idx];
            const auto& st = t.states[si];
            double w = relw[s][idx];
            double sig_s = sigma[si][pos];
            double dev = t.payoff(si, pos) - g[s];
            J.at(s, s) += beta * w * (1.0 - sig_s) * dev;
            for (std::size_t kpos = 0; kpos < st.members.size(); ++kpos) {
                if (kpos == pos) continue;
                std::size_t k = st.members[kpos];
                J.at(s, k) += beta * w * sigma[si][kpos] * (-dev);
            }
        }
        J.at(s, s) -= 1.0;
    }
    return J;
}

std::vector<std::vector<int>> offdiagonal_signs(const Valuations& v, const ReducedTree& t,
                                                double beta) {
    if (v.size() != t.n_classes())
        throw ValidationError("valuation vector length does not match class count");
    if (!(beta >= 0.0) || std::isinf(beta))
        throw ValidationError("beta must be finite and nonnegative");

    const std::size_t n = t.n_classes();
    std::vector<std::vector<int>> sgn(n, std::vector<int>(n, 0));
    if (beta == 0.0) return sgn;

    const std::size_t ns = t.states.size();
    std::vector<double> lse(ns);
    for (std::size_t si = 0; si < ns; ++si) {
        const auto& st = t.states[si];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m : st.members) best = std::max(best, beta * v[m]);
        double sum = 0.0;
        for (std::size_t m : st.members) sum += std::exp(beta * v[m] - best);
        lse[si] = best + std::log(sum);
    }

    auto incidence = t.incidence();
    Valuations g(n);
    for (std::size_t s = 0; s < n; ++s) {
        double max_log = -std::numeric_limits<double>::infinity();
        for (const auto& [si, pos] : incidence[s])
            max_log = std::max(max_log, beta * v[s] - lse[si] + std::log(t.states[si].prob));
        double num = 0.0, den = 0.0;
        for (const auto& [si, pos] : incidence[s]) {
            double w = std::exp(beta * v[s] - lse[si] + std::log(t.states[si].prob) - max_log);
            num += w * t.payoff(si, pos);
            den += w;
        }
        g[s] = num / den;
    }

    // J_sk is a positive multiple of sum_w exp(l_w) * (g_s - payoff_w(s)) over
    // the states holding both classes, with l_w = ln p + beta(v_s + v_k) - 2 lse.
    // Shifting l_w by its maximum leaves the sign alone and avoids underflow.
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < n; ++k) {
            if (k == s) continue;
            double max_log = -std::numeric_limits<double>::infinity();
            for (const auto& [si, pos] : incidence[s]) {
                if (!t.states[si].contains(k)) continue;
                double l = std::log(t.states[si].prob) + beta * (v[s] + v[k]) - 2.0 * lse[si];
                max_log = std::max(max_log, l);
            }
            if (max_log == -std::numeric_limits<double>::infinity()) continue;
            double sum = 0.0;
            for (const auto& [si, pos] : incidence[s]) {
                if (!t.states[si].contains(k)) continue;
                double l = std::log(t.states[si].prob) + beta * (v[s] + v[k]) - 2.0 * lse[si];
                sum += std::exp(l - max_log) * (g[s] - t.payoff(si, pos));
            }
            sgn[s][k] = (sum > 0.0) - (sum < 0.0);
        }
    }
    return sgn;
}

double row_sum_defect(const Matrix& J) {
    double worst = 0.0;
    for (std::size_t i = 0; i < J.n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < J.n; ++j) sum += J.at(i, j);
        worst = std::max(worst, std::abs(sum + 1.0));
    }
    return worst;
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::stable: return "stable";
        case Verdict::unstable: return "unstable";
        case Verdict::marginal: return "marginal";
    }
    return "marginal";
}

namespace {

bool strongly_connected(const Matrix& J, double threshold) {
    const std::size_t n = J.n;
    if (n <= 1) return true;
    auto reaches_all = [&](bool transpose) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        std::size_t count = 1;
        while (!stack.empty()) {
            std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t w = 0; w < n; ++w) {
                if (w == u || seen[w]) continue;
                double edge = transpose ? J.at(w, u) : J.at(u, w);
                if (std::abs(edge) > threshold) {
                    seen[w] = true;
                    ++count;
                    stack.push_back(w);
                }
            }
        }
        return count == n;
    };
    return reaches_all(false) && reaches_all(true);
}

} // namespace

StabilityReport stability_report(const Valuations& v, const ReducedTree& t, double beta) {
    StabilityReport rep;
    rep.jac = jacobian(v, t, beta);
    const std::size_t n = rep.jac.n;

    Valuations rhs = mean_field_rhs(v, t, beta);
    for (double x : rhs) rep.residual = std::max(rep.residual, std::abs(x));
    rep.residual_warning = rep.residual > 1e-8;

    rep.eigs = eigenvalues(rep.jac);
    rep.spectral_abscissa = rep.eigs.front().real();
    if (rep.spectral_abscissa < -1e-8) rep.verdict = Verdict::stable;
    else if (rep.spectral_abscissa > 1e-8) rep.verdict = Verdict::unstable;
    else rep.verdict = Verdict::marginal;

    rep.discs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        rep.discs[i].center = rep.jac.at(i, i);
        double r = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) r += std::abs(rep.jac.at(i, j));
        rep.discs[i].radius = r;
    }

    rep.discs_cover_spectrum = true;
    for (const auto& lam : rep.eigs) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& d : rep.discs) {
            double dist = std::hypot(lam.real() - d.center, lam.imag()) - d.radius;
            best = std::min(best, dist);
        }
        if (best > 1e-8) { rep.discs_cover_spectrum = false; break; }
    }

    rep.cooperative = true;
    for (std::size_t i = 0; i < n && rep.cooperative; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && !(rep.jac.at(i, j) > 0.0)) { rep.cooperative = false; break; }

    rep.irreducible = strongly_connected(rep.jac, 1e-12);
    rep.row_sum_defect = row_sum_defect(rep.jac);
    return rep;
}

} // namespace cpal
