#pragma once
// Diagnostics and evaluation: accuracies, pairing / logit-gap metrics, the
// Hessian escape-direction probe, first-step prediction, heatmap export.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icr/model.hpp"
#include "icr/training.hpp"

namespace icr {

// psi = max{v1/v2, v2/v1, v3/v4, v4/v3}; nullopt ("degenerate") when any of
// v1..v4 is below 1e-12.
std::optional<double> pairing_metric(const std::vector<double>& v);
// g = 2 (v1 - v3)(v2 - v4), the step-1 logit gap l(r*) - l(r_conf).
double logit_gap(const std::vector<double>& v);
// || v - (1/4, 1/4, 1/4, 1/4, 0, 0) ||_inf
double distance_to_saddle(const std::vector<double>& v);

struct Diagnostics {
    std::vector<double> v, q;
    std::optional<double> psi;
    double g = 0.0;
    double distance_to_saddle = 0.0;
    double acc1 = 0.0, acc2 = 0.0;
    LossBreakdown loss;
};
Diagnostics diagnose(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                     const std::vector<double>& theta, const std::vector<double>& omega, double T);

struct EvalScope {
    bool exhaustive = true;
    std::size_t samples = 0;  // used when !exhaustive (or above the cutoff)
    std::uint64_t seed = 0;
    static EvalScope all() { return {}; }
    static EvalScope sample(std::size_t n, std::uint64_t seed) { return {false, n, seed}; }
};

// Above this many sequences evaluation falls back to sampling.
inline constexpr long long kExhaustiveCutoff = 1'000'000;

struct ClassAccuracy {
    long long count = 0;
    long long correct1 = 0;
};

struct EvalReport {
    long long evaluated = 0;
    bool exhaustive = true;
    double acc1 = 0.0;            // argmax relation == r*
    double acc2 = 0.0;            // teacher-forced answer argmax == r*(s_{k+1})
    double acc_end_to_end = 0.0;  // free-running two-step decode
    double acc1_consistent = 0.0; // predicted relation agrees with r* on every subject in the sequence
    long long ties1 = 0, ties2 = 0;
    ClassAccuracy confusing, mismatched, other;  // step-1 accuracy by sequence class (k = 2)
};

// Uses the closed forms for partial-mode attention over a constructed memory
// and the token-space forward otherwise.
EvalReport evaluate(const Model& model, const AttnParams& attn, double T, const EvalScope& scope);
// Partial mode over a constructed memory without materializing the MLP.
EvalReport evaluate_closed_form(const KnowledgeWorld& world, const std::vector<double>& theta,
                                const std::vector<double>& omega, double T, const EvalScope& scope);
// Full-mode state from the reverse-mode engine.
EvalReport evaluate_full(const KnowledgeWorld& world, const EmbeddingBasis& basis, const FullState& state, double T,
                         const EvalScope& scope);

// Second directional derivative of f at x along dir: central difference with
// step h refined by one Richardson extrapolation (h and h/2).
double second_directional_derivative(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, const std::vector<double>& dir, double h = 1e-4);

// f''(0) for x -> L1(theta + x * dir). Default direction (1,1,-1,-1,0,0)/2.
double hessian_probe(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                     const std::vector<double>& theta, double T, std::vector<double> dir = {}, double h = 1e-4);

struct FirstStepPrediction {
    std::vector<double> v_linear;   // v0 - eta J grad_theta L1 (first-order Taylor)
    std::vector<double> v_pattern;  // (1/6+a, 1/6, 1/6+a, 1/6, 1/6-2a, 1/6)
    std::vector<double> v_actual;   // softmax after one exact GD step
    double alpha = 0.0;             // fitted from v_linear: ((v1+v3)/2 - 1/6)
    double c = 0.0;                 // alpha * T / (p_mis * eta)  (nan if p_mis = 0)
    double p_mis = 0.0;
    double envelope = 0.0;          // eta^2 / T^2
};
FirstStepPrediction first_gd_step_prediction(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                             double T, double eta1);

// Writes <prefix>.csv (rows "v" and "q") and <prefix>.svg.
void export_attention_heatmap(const std::vector<double>& v, const std::vector<double>& q, const std::string& prefix,
                              const std::string& title = "attention");
std::string heatmap_csv(const std::vector<double>& v, const std::vector<double>& q);
std::string heatmap_svg(const std::vector<double>& v, const std::vector<double>& q, const std::string& title);

}  // namespace icr
