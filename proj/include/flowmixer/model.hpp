#pragma once

// FlowMixer forward map  F(X) = phi^-1( W_t phi(X) W_f^T ).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowmixer/config.hpp"
#include "flowmixer/linalg.hpp"

namespace flowmixer::model {

using linalg::Matrix;

enum class TimeMode { linear, expm, periodic };
enum class NormMode { revin, td_revin, identity };
enum class ForecastRows { head, tail };

std::string to_string(TimeMode m);
std::string to_string(NormMode m);
TimeMode parse_time_mode(const std::string& s);
NormMode parse_norm_mode(const std::string& s);

struct Toggles {
    bool feature_mix = true;
    bool time_mix = true;
    bool positivity = true;
    bool static_attention = true;
    bool skip = true;
};

struct SOBRConfig {
    std::size_t d_t = 1024;
    std::size_t d_f = 64;
    double leaky_slope = 0.1;
    std::uint64_t seed = 0;
};

struct MixerConfig {
    std::size_t n_t = 96;
    std::size_t n_f = 1;
    std::size_t horizon = 96;
    TimeMode time_mode = TimeMode::linear;
    std::vector<std::size_t> periodicities;
    std::size_t d_k = 8;
    Toggles toggles;
    NormMode norm_mode = NormMode::revin;
    std::optional<SOBRConfig> sobr;
    double dropout = 0.0;
    double epsilon = 1e-5;
    ForecastRows forecast_rows = ForecastRows::head;

    /// Throws ConfigError on any violated invariant.
    void validate() const;
    /// Size of the mixed time axis (d_t under SOBR, else n_t).
    std::size_t time_dim() const { return sobr ? sobr->d_t : n_t; }
    /// Size of the mixed feature axis (d_f under SOBR, else n_f).
    std::size_t feature_dim() const { return sobr ? sobr->d_f : n_f; }
    /// First output row of the forecast block.
    std::size_t forecast_offset() const { return forecast_rows == ForecastRows::head ? 0 : n_t - horizon; }

    /// Reads the [model] section. Keys follow the hyperparameter-table column
    /// names: input_len, h, expm, periodicities, revin, ...
    static MixerConfig from_config(const Config& c, const std::string& section = "model");
    void to_config(Config& c, const std::string& section = "model") const;
};

/// One periodic component kron(R, S): R is r x r, S is p x p, r * p = time_dim.
struct PeriodicFactor {
    Matrix r;
    Matrix s;
};

struct MixerWeights {
    Matrix w0;                              // linear / expm modes
    std::vector<PeriodicFactor> periodic;   // periodic mode, one per periodicity
    double alpha = 1.0;
    Matrix q, k;                            // feature_dim x d_k
    double beta = 1.0;
    Matrix wf_free;                         // static_attention off
    Matrix revin_a, revin_b;                // 1 x n_f (revin) or n_t x n_f (td_revin)
    double epsilon = 1e-5;                  // not trainable

    /// Zero-valued weights with the shapes required by c.
    static MixerWeights zeros_like(const MixerConfig& c);
    /// Seeded initialization: W0 ~ N(0, 1/m), Q,K ~ N(0, 1/sqrt(d_k)), alpha = beta = 1,
    /// a = 1, b = 0, wf_free = I.
    static MixerWeights init(const MixerConfig& c, std::uint64_t seed);

    /// Trainable parameters in a fixed order (scalars as length-1 spans).
    std::vector<std::span<double>> params();
    std::vector<std::span<const double>> params() const;
    std::vector<std::string> param_names() const;
};

using Gradients = MixerWeights;

struct SOBRMaps {
    Matrix u_t;  // d_t x n_t
    Matrix u_f;  // d_f x n_f
    double leaky_slope = 0.1;

    static SOBRMaps make(const MixerConfig& c);
};

struct InstanceStats {
    std::vector<double> mean;
    std::vector<double> std;  // sqrt(var + eps)
};

/// A complete model: configuration, trainable weights and frozen lifts.
struct FlowMixer {
    MixerConfig config;
    MixerWeights weights;
    std::optional<SOBRMaps> sobr;

    static FlowMixer create(const MixerConfig& c, std::uint64_t seed);
};

Matrix build_time_mix(const MixerWeights& w, const MixerConfig& c);
Matrix build_feature_mix(const MixerWeights& w, const MixerConfig& c);

/// Built mixing matrices plus the intermediates the adjoint needs.
/// Identity flags avoid materializing large identity matrices.
struct Mixing {
    Matrix wt;
    bool wt_identity = false;
    Matrix wf;
    bool wf_identity = false;
    Matrix softmax;      // row softmax of QK^T/sqrt(d_k)
    Matrix expm_value;   // expm(pos(W0)) in expm mode
    Matrix pos_w0;       // pos(W0) in expm mode
};
Mixing build_mixing(const MixerWeights& w, const MixerConfig& c);

std::pair<Matrix, InstanceStats> revin_apply(const Matrix& x, const MixerWeights& w, const MixerConfig& c);
/// Normalizes with stats captured elsewhere.
Matrix revin_apply_frozen(const Matrix& x, const InstanceStats& stats, const MixerWeights& w, const MixerConfig& c);
Matrix revin_invert(const Matrix& y, const InstanceStats& stats, const MixerWeights& w, const MixerConfig& c);

double leaky(double x, double slope);
double leaky_inverse(double y, double slope);
Matrix sobr_apply(const Matrix& x, const SOBRMaps& s);
Matrix sobr_invert(const Matrix& z, const SOBRMaps& s);

struct ForwardOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;        // dropout masks; required when training with dropout
    const InstanceStats* frozen_stats = nullptr;
};

/// Intermediates of one forward pass.
struct Trace {
    InstanceStats stats;
    Matrix xhat;      // standardized input (before affine)
    Matrix lifted;    // pre-activation U_t N U_f^T (SOBR only)
    Matrix mask;      // dropout scale per entry (empty when dropout inactive)
    Matrix mixed_in;  // input to the mixing product
    Matrix y;         // W_t D W_f^T
    Matrix z;         // after unlift
    Matrix out;
};

Matrix forward(const Matrix& x, const FlowMixer& m, const ForwardOptions& opt = {});
/// Forward pass with prebuilt mixing matrices, recording intermediates.
Matrix forward_with(const Matrix& x, const FlowMixer& m, const Mixing& mix, const ForwardOptions& opt = {},
                    Trace* trace = nullptr);
/// The two halves of forward_with: phi, lift and dropout give the mixing input D;
/// finish_forward maps Y = W_t D W_f^T back to output space. `keep` stores intermediates in tr.
Matrix mixing_input(const Matrix& x, const FlowMixer& m, const ForwardOptions& opt, Trace& tr, bool keep);
Matrix finish_forward(Matrix y, const FlowMixer& m, Trace& tr, bool keep);
/// forward_with over many windows with one W_t product for the whole batch.
std::vector<Matrix> forward_batch(const std::vector<const Matrix*>& xs, const FlowMixer& m, const Mixing& mix);
/// Side-by-side concatenation of equally shaped blocks, and block b of width `cols` back out.
Matrix hcat(const std::vector<Matrix>& blocks);
Matrix hblock(const Matrix& m, std::size_t b, std::size_t cols);
/// phi^-1(W_t phi(X) W_f^T) for arbitrary mixing matrices and the model's phi.
Matrix apply_mixing(const Matrix& x, const FlowMixer& m, const Matrix& wt, const Matrix& wf,
                    const InstanceStats* frozen_stats = nullptr);

struct MixingPair {
    Matrix wt;
    Matrix wf;
};
/// Mixing matrices of F2 o F1 (apply m1 first). Requires identical phi and no SOBR.
MixingPair compose(const FlowMixer& m1, const FlowMixer& m2);

/// Extracts the forecast rows of a model output.
Matrix forecast_block(const Matrix& out, const MixerConfig& c);

/// Checkpoint directory: model.ini (config) plus weights.fmxa (weights, SOBR lifts).
void save_checkpoint(const std::filesystem::path& dir, const FlowMixer& m);
FlowMixer load_checkpoint(const std::filesystem::path& dir);

}  // namespace flowmixer::model
