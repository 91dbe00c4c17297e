#pragma once

// Maximum-likelihood state reconstruction from rotated population data.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qzd/common.hpp"
#include "qzd/detection.hpp"
#include "qzd/ladder.hpp"
#include "qzd/parallel.hpp"

namespace qzd {

/// One POVM element. Monitored outcomes are rank one, |u><u| with
/// u = U^+|level>; the per-setting "elsewhere" outcome is I - sum |u><u|.
struct MeasurementOperator {
    int setting_id = 0;
    std::optional<LadderLevel> level;   ///< empty for the complement
    CMatrix effect;
};

struct Povm {
    Basis basis;
    std::vector<MeasurementSetting> settings;
    std::vector<LadderLevel> monitored;
    CMatrix rows;   ///< row (s * monitored + l) is u^+ for setting s, level l

    std::size_t outcomes_per_setting() const { return monitored.size(); }

    CMatrix effect(std::size_t setting, std::optional<std::size_t> level) const {
        const auto d = static_cast<Eigen::Index>(basis.size());
        const auto m = static_cast<Eigen::Index>(monitored.size());
        const auto first = static_cast<Eigen::Index>(setting) * m;
        if (level) {
            const CVector u = rows.row(first + static_cast<Eigen::Index>(*level)).adjoint();
            return u * u.adjoint();
        }
        const CMatrix block = rows.middleRows(first, m);
        return CMatrix::Identity(d, d) - block.adjoint() * block;
    }

    std::vector<MeasurementOperator> operators() const {
        std::vector<MeasurementOperator> out;
        for (std::size_t s = 0; s < settings.size(); ++s) {
            for (std::size_t l = 0; l < monitored.size(); ++l) out.push_back({settings[s].id, monitored[l], effect(s, l)});
            out.push_back({settings[s].id, std::nullopt, effect(s, std::nullopt)});
        }
        return out;
    }
};

/// POVM of every setting. Each setting's effects sum to the identity within 1e-9.
inline Povm build_povm(const std::vector<MeasurementSetting>& settings, const MeasurementContext& ctx,
                       unsigned threads = 1) {
    if (settings.empty()) throw Error("no measurement settings");
    if (ctx.monitored.empty()) throw Error("no monitored levels");
    const SettingUnitaries unitaries(ctx);
    const auto d = static_cast<Eigen::Index>(ctx.basis.size());
    const auto m = static_cast<Eigen::Index>(ctx.monitored.size());
    std::vector<Eigen::Index> idx;
    for (const auto& level : ctx.monitored) idx.push_back(static_cast<Eigen::Index>(ctx.basis.index_of(level)));
    Povm povm{ctx.basis, settings, ctx.monitored, CMatrix(static_cast<Eigen::Index>(settings.size()) * m, d)};
    parallel_for(settings.size(), threads, [&](std::size_t s) {
        const CMatrix u = unitaries.unitary(settings[s]);
        const double defect = unitarity_defect(u);
        if (defect > 1e-9) throw InvariantViolation("measurement unitarity", std::to_string(defect));
        // effect |u><u| with u = U^+ |level>, so the stored row u^+ is row `level` of U
        for (Eigen::Index l = 0; l < m; ++l) povm.rows.row(static_cast<Eigen::Index>(s) * m + l) = u.row(idx[static_cast<std::size_t>(l)]);
    });
    // completeness: the complement is I - sum, which is PSD iff the rows are orthonormal
    for (std::size_t s = 0; s < settings.size(); ++s) {
        const CMatrix block = povm.rows.middleRows(static_cast<Eigen::Index>(s) * m, m);
        const double defect = max_abs(block * block.adjoint() - CMatrix::Identity(m, m));
        if (defect > 1e-9) throw InvariantViolation("POVM completeness", "setting " + std::to_string(settings[s].id));
    }
    return povm;
}

struct MaxLikeOptions {
    int max_iterations = 5000;
    double tolerance = 1e-10;        ///< stop when the log-likelihood gain drops below this
    double probability_floor = 1e-12;
    unsigned threads = 1;
};

struct ReconstructionResult {
    DensityMatrix rho;
    double log_likelihood = 0.0;     ///< per setting, i.e. sum f log p with f normalized over the dataset
    int iterations = 0;
    bool converged = false;
    int diluted_steps = 0;
    int floored_probabilities = 0;
    double leak_fraction = 0.0;      ///< weight outside the bare n_e ladder and the dressed |+>
    std::vector<std::string> warnings;
    std::vector<double> history;     ///< log-likelihood of the start point and of every accepted step
};

namespace detail {

/// Frequencies aligned with povm rows plus one complement per setting.
struct FrequencyTable {
    RVector monitored;
    RVector complement;
};

inline FrequencyTable frequency_table(const Povm& povm, const Dataset& data) {
    const auto m = povm.outcomes_per_setting();
    std::map<int, std::size_t> setting_index;
    for (std::size_t s = 0; s < povm.settings.size(); ++s) setting_index[povm.settings[s].id] = s;
    FrequencyTable f{RVector::Constant(static_cast<Eigen::Index>(povm.settings.size() * m), -1.0),
                     RVector::Zero(static_cast<Eigen::Index>(povm.settings.size()))};
    for (const auto& r : data.records) {
        auto s = setting_index.find(r.setting.id);
        if (s == setting_index.end()) throw Error("dataset setting " + std::to_string(r.setting.id) + " not in the POVM");
        auto l = std::find(povm.monitored.begin(), povm.monitored.end(), r.level);
        if (l == povm.monitored.end()) throw Error("dataset level " + r.level.label() + " is not monitored");
        if (!(r.probability >= 0.0 && r.probability <= 1.0 + 1e-12)) throw Error("dataset probability outside [0, 1]");
        f.monitored(static_cast<Eigen::Index>(s->second * m + static_cast<std::size_t>(l - povm.monitored.begin()))) = r.probability;
    }
    if ((f.monitored.array() < 0.0).any()) throw Error("dataset does not cover every setting and monitored level");
    for (std::size_t s = 0; s < povm.settings.size(); ++s) {
        const double sum = f.monitored.segment(static_cast<Eigen::Index>(s * m), static_cast<Eigen::Index>(m)).sum();
        if (sum > 1.0 + 1e-9) throw Error("frequencies of setting " + std::to_string(povm.settings[s].id) + " exceed one");
        f.complement(static_cast<Eigen::Index>(s)) = std::max(0.0, 1.0 - sum);
    }
    return f;
}

struct Evaluation {
    RVector p;            // monitored probabilities
    RVector p_complement;
    double log_likelihood = 0.0;
    int floored = 0;
};

inline Evaluation evaluate(const Povm& povm, const FrequencyTable& f, const CMatrix& rho, double floor) {
    const auto m = static_cast<Eigen::Index>(povm.outcomes_per_setting());
    const CMatrix brho = povm.rows * rho;
    Evaluation e;
    e.p = (brho.cwiseProduct(povm.rows.conjugate())).rowwise().sum().real();
    e.p_complement = RVector(f.complement.size());
    auto term = [&](double freq, double& prob) {
        if (prob < floor) {
            prob = floor;
            ++e.floored;
        }
        return freq > 0.0 ? freq * std::log(prob) : 0.0;
    };
    for (Eigen::Index s = 0; s < f.complement.size(); ++s) {
        double pc = 1.0 - e.p.segment(s * m, m).sum();
        e.log_likelihood += term(f.complement(s), pc);
        e.p_complement(s) = pc;
        for (Eigen::Index l = 0; l < m; ++l) e.log_likelihood += term(f.monitored(s * m + l), e.p(s * m + l));
    }
    // settings are weighted equally, so the dataset is one POVM with frequencies summing to one
    e.log_likelihood /= static_cast<double>(f.complement.size());
    return e;
}

/// R = sum_i f_i / p_i E_i with the complement folded into the identity.
inline CMatrix r_operator(const Povm& povm, const FrequencyTable& f, const Evaluation& e) {
    const auto m = static_cast<Eigen::Index>(povm.outcomes_per_setting());
    RVector w(f.monitored.size());
    double identity = 0.0;
    for (Eigen::Index s = 0; s < f.complement.size(); ++s) {
        const double c = f.complement(s) > 0.0 ? f.complement(s) / e.p_complement(s) : 0.0;
        identity += c;
        for (Eigen::Index l = 0; l < m; ++l) w(s * m + l) = f.monitored(s * m + l) / e.p(s * m + l) - c;
    }
    CMatrix r = povm.rows.adjoint() * (w.cast<complex>().asDiagonal() * povm.rows);
    r.diagonal().array() += identity;
    return r / static_cast<double>(f.complement.size());
}

}  // namespace detail

/// Iterative R rho R maximum-likelihood reconstruction from the maximally mixed
/// state. A step that would lower the likelihood is replaced by the diluted
/// update (I + eps R) rho (I + eps R) with eps halved until the likelihood
/// does not decrease.
inline ReconstructionResult maxlike_reconstruct(const Povm& povm, const Dataset& data, const MaxLikeOptions& opts = {}) {
    if (opts.max_iterations < 1) throw Error("max_iterations must be positive");
    const detail::FrequencyTable f = detail::frequency_table(povm, data);
    const auto d = static_cast<Eigen::Index>(povm.basis.size());
    CMatrix rho = CMatrix::Identity(d, d) / static_cast<double>(d);
    detail::Evaluation cur = detail::evaluate(povm, f, rho, opts.probability_floor);

    ReconstructionResult out{DensityMatrix::maximally_mixed(povm.basis), 0.0, 0, false, 0, 0, 0.0, {}, {cur.log_likelihood}};
    auto normalized = [](CMatrix m) {
        m = 0.5 * (m + m.adjoint());
        return CMatrix(m / m.trace().real());
    };
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        const CMatrix r = detail::r_operator(povm, f, cur);
        CMatrix next = normalized(r * rho * r);
        detail::Evaluation ev = detail::evaluate(povm, f, next, opts.probability_floor);
        if (ev.log_likelihood < cur.log_likelihood) {
            double eps = 1.0;
            bool accepted = false;
            for (int halving = 0; halving < 60; ++halving) {
                eps *= 0.5;
                CMatrix a = CMatrix::Identity(d, d) + eps * r;
                next = normalized(a * rho * a.adjoint());
                ev = detail::evaluate(povm, f, next, opts.probability_floor);
                if (ev.log_likelihood >= cur.log_likelihood) {
                    accepted = true;
                    break;
                }
            }
            ++out.diluted_steps;
            if (!accepted) {
                out.converged = true;   // no ascent direction left at double precision
                break;
            }
        }
        const double gain = ev.log_likelihood - cur.log_likelihood;
        if (gain < -1e-12 * std::max(1.0, std::abs(cur.log_likelihood))) {
            throw InvariantViolation("likelihood monotonicity", std::to_string(gain));
        }
        rho = std::move(next);
        cur = std::move(ev);
        out.history.push_back(cur.log_likelihood);
        if (gain < opts.tolerance) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.iterations = it;
    out.log_likelihood = cur.log_likelihood;
    out.floored_probabilities = cur.floored;
    if (!out.converged) out.warnings.push_back("iteration cap reached before the likelihood gain fell below tolerance");
    out.rho = DensityMatrix::from_unnormalized(povm.basis, rho);
    return out;
}

/// Reconstructed state brought back to the n_e spin ladder.
struct FinalizedState {
    DensityMatrix rho;                 ///< spin ladder, trace one
    double retained_trace = 0.0;
    double scaled_trace = 0.0;         ///< retained / leak coefficient
    double minus_population = 0.0;
    bool minus_within_bound = true;    ///< minus population <= 1.5 %
};

/// Without an n_g partner for k_z (spin-only reconstructions) the bare ladder is used.
inline FinalizedState finalize_spin_state(ReconstructionResult& result, int k_z, double leak_coefficient = 0.91) {
    const bool dressed = result.rho.basis().find({kManifoldG, k_z}).has_value();
    ProjectionOptions opts;
    opts.leak_coefficient = leak_coefficient;
    if (dressed) opts.dressed_step = k_z;
    const SpinProjection proj = project_to_spin_ladder(result.rho, opts);
    result.leak_fraction = 1.0 - proj.retained_trace;
    FinalizedState out{proj.rho, proj.retained_trace, proj.scaled_trace, dressed ? minus_state_population(result.rho, k_z) : 0.0};
    out.minus_within_bound = out.minus_population <= 0.015;
    if (!out.minus_within_bound) result.warnings.push_back("dressed |-> population above 1.5 %");
    return out;
}

inline nlohmann::json diagnostics_to_json(const ReconstructionResult& r) {
    return {{"log_likelihood", r.log_likelihood}, {"iterations", r.iterations}, {"converged", r.converged},
            {"diluted_steps", r.diluted_steps}, {"floored_probabilities", r.floored_probabilities},
            {"leak_fraction", r.leak_fraction}, {"warnings", r.warnings}};
}

}  // namespace qzd
