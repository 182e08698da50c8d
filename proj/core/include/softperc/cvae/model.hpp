#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "softperc/autodiff.hpp"
#include "softperc/common.hpp"
#include "softperc/ops.hpp"
#include "softperc/rng.hpp"
#include "softperc/tensor.hpp"

namespace softperc::cvae {

// Sensor dimensions. Proprioception is the finger joints followed by the arm
// joints, in dataset record order; images are channel-first once inside the
// model (the dataset stores them HWC).
constexpr std::int64_t kProprioDim = 23;
constexpr std::int64_t kForceDim = 20;
constexpr std::int64_t kActionDim = 3;
constexpr std::int64_t kImageSize = 64;

/// Which modalities the model consumes and predicts, plus loss weights.
/// The three canonical experiment rows are proprio-only, +vision input, and
/// +vision input with flow output; a force encoder exists but stays off by
/// default. Flow's weight normalizes its summed error per element so one
/// image does not drown the low-dimensional modalities.
struct ModalityConfig {
    bool in_proprio = true;
    bool in_vision = false;
    bool in_force = false;
    bool out_proprio = true;
    bool out_force = true;
    bool out_flow = false;

    int latent_dim = 16;

    double w_proprio = 1.0;
    double w_force = 1.0;
    double w_flow = 1.0 / (kImageSize * kImageSize * 2.0);
    double beta = 1e-3;

    void validate() const {
        if (!in_proprio && !in_vision && !in_force)
            throw UsageError("ModalityConfig: at least one input modality required");
        if (!out_proprio && !out_force && !out_flow)
            throw UsageError("ModalityConfig: at least one output modality required");
        if (latent_dim <= 0) throw UsageError("ModalityConfig: latent_dim must be positive");
    }
};

/// One batch of sensor inputs at time t. Only the configured modalities need
/// to be populated; the rest stay default (empty) tensors.
template <class T>
struct SensorBatchT {
    num::TensorT<T> proprio;  // [B, 23]
    num::TensorT<T> vision;   // [B, 3, 64, 64]
    num::TensorT<T> force;    // [B, 20]
};

/// Ground-truth next-frame targets matching the configured outputs.
template <class T>
struct TargetBatchT {
    num::TensorT<T> proprio;  // [B, 23]
    num::TensorT<T> force;    // [B, 20]
    num::TensorT<T> flow;     // [B, 2, 64, 64]
};

/// Encoded latent: posterior parameters plus the (possibly reparameterized)
/// sample. In mean mode z aliases mu.
template <class T>
struct LatentT {
    num::VarT<T> mu;      // [B, d]
    num::VarT<T> logvar;  // [B, d]
    num::VarT<T> z;       // [B, d]
};

/// Decoded next-state prediction; undefined vars for unconfigured outputs.
template <class T>
struct PredictionT {
    num::VarT<T> proprio;  // [B, 23]
    num::VarT<T> force;    // [B, 20], nonnegative (softplus head)
    num::VarT<T> flow;     // [B, 2, 64, 64]
};

/// Conditional VAE over the sensor stream: modality encoders fused at the
/// decision level into (mu, logvar), action conditioning of the sampled
/// latent, and per-modality decoders predicting the next frame.
///
/// Templated on the scalar type so the whole network can be instantiated in
/// double for finite-difference checks; training runs in float.
template <class T>
class WorldModelT {
public:
    WorldModelT(const ModalityConfig& cfg, Rng& init_rng) : cfg_(cfg) {
        cfg_.validate();
        // Construction order fixes the parameter registry order, which in
        // turn fixes the checkpoint weight layout. Keep it stable.
        if (cfg_.in_proprio) {
            enc_p0_ = dense("enc.proprio.0", kProprioDim, 64, init_rng);
            enc_p1_ = dense("enc.proprio.1", 64, 32, init_rng);
        }
        if (cfg_.in_vision) {
            conv0_ = conv("enc.vision.conv0", 3, 8, init_rng);
            conv1_ = conv("enc.vision.conv1", 8, 16, init_rng);
            conv2_ = conv("enc.vision.conv2", 16, 32, init_rng);
            enc_v_ = dense("enc.vision.fc", 32 * 8 * 8, 64, init_rng);
        }
        if (cfg_.in_force) {
            enc_f0_ = dense("enc.force.0", kForceDim, 64, init_rng);
            enc_f1_ = dense("enc.force.1", 64, 32, init_rng);
        }
        const std::int64_t fused = 32 * (cfg_.in_proprio ? 1 : 0) +
                                   64 * (cfg_.in_vision ? 1 : 0) +
                                   32 * (cfg_.in_force ? 1 : 0);
        const std::int64_t d = cfg_.latent_dim;
        fuse_ = dense("fuse.hidden", fused, 64, init_rng);
        head_mu_ = dense("fuse.mu", 64, d, init_rng);
        head_logvar_ = dense("fuse.logvar", 64, d, init_rng);
        cond0_ = dense("cond.0", d + kActionDim, d, init_rng);
        cond1_ = dense("cond.1", d, d, init_rng);
        if (cfg_.out_proprio) {
            dec_p0_ = dense("dec.proprio.0", d, 64, init_rng);
            dec_p1_ = dense("dec.proprio.1", 64, kProprioDim, init_rng);
        }
        if (cfg_.out_force) {
            dec_f0_ = dense("dec.force.0", d, 64, init_rng);
            dec_f1_ = dense("dec.force.1", 64, kForceDim, init_rng);
        }
        if (cfg_.out_flow) {
            dec_fl_ = dense("dec.flow.fc", d, 32 * 8 * 8, init_rng);
            dfl0_ = deconv("dec.flow.deconv0", 32, 16, init_rng);
            dfl1_ = deconv("dec.flow.deconv1", 16, 8, init_rng);
            dfl2_ = deconv("dec.flow.deconv2", 8, 2, init_rng);
        }
    }

    const ModalityConfig& config() const { return cfg_; }
    std::vector<num::VarT<T>>& parameters() { return params_; }
    const std::vector<num::VarT<T>>& parameters() const { return params_; }
    const std::vector<std::string>& parameter_names() const { return names_; }

    /// Deterministic encode: z = mu.
    LatentT<T> encode(const SensorBatchT<T>& frame) const { return encode_impl(frame, nullptr); }

    /// Stochastic encode: z = mu + exp(logvar/2) * eps, eps ~ N(0, I) drawn
    /// row-major from `sampler`. Gradients flow through mu and logvar only.
    LatentT<T> encode(const SensorBatchT<T>& frame, Rng& sampler) const {
        return encode_impl(frame, &sampler);
    }

    /// Action conditioning: MLP on [z ; a]. Deliberately no bounds check —
    /// probes feed out-of-range actions on purpose.
    num::VarT<T> condition(const num::VarT<T>& z, const num::TensorT<T>& actions) const {
        if (!z.defined() || z.value().ndim() != 2 || z.value().dim(1) != cfg_.latent_dim)
            throw UsageError("condition: z must be [B, latent_dim]");
        if (actions.ndim() != 2 || actions.dim(1) != kActionDim ||
            actions.dim(0) != z.value().dim(0))
            throw UsageError("condition: actions must be [B, 3] with z's batch size");
        auto h = num::concat(z, num::VarT<T>::constant(actions), 1);
        h = num::tanh_op(affine(cond0_, h));
        return affine(cond1_, h);
    }

    PredictionT<T> decode(const num::VarT<T>& z_c) const {
        if (!z_c.defined() || z_c.value().ndim() != 2 || z_c.value().dim(1) != cfg_.latent_dim)
            throw UsageError("decode: z_c must be [B, latent_dim]");
        const std::int64_t b = z_c.value().dim(0);
        PredictionT<T> out;
        if (cfg_.out_proprio)
            out.proprio = affine(dec_p1_, num::tanh_op(affine(dec_p0_, z_c)));
        if (cfg_.out_force)
            out.force = num::softplus(affine(dec_f1_, num::tanh_op(affine(dec_f0_, z_c))));
        if (cfg_.out_flow) {
            auto x = num::relu(affine(dec_fl_, z_c));
            x = num::reshape(x, {b, 32, 8, 8});
            x = num::relu(num::deconv2d(x, dfl0_.w, dfl0_.b, 2, 1));  // [B, 16, 16, 16]
            x = num::relu(num::deconv2d(x, dfl1_.w, dfl1_.b, 2, 1));  // [B, 8, 32, 32]
            out.flow = num::deconv2d(x, dfl2_.w, dfl2_.b, 2, 1);      // linear output head
        }
        return out;
    }

private:
    struct Layer {
        num::VarT<T> w, b;
    };

    num::VarT<T> make_param(std::string name, num::TensorT<T> value) {
        auto v = num::VarT<T>::leaf(std::move(value), true, name);
        names_.push_back(std::move(name));
        params_.push_back(v);
        return v;
    }

    /// Glorot-uniform weights, zero bias; draw order is row-major so the
    /// initialization is reproducible from the init stream alone.
    num::TensorT<T> glorot(num::Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
        num::TensorT<T> t(std::move(shape));
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
        return t;
    }

    Layer dense(const std::string& name, std::int64_t in, std::int64_t out, Rng& rng) {
        Layer l;
        l.w = make_param(name + ".w", glorot({in, out}, in, out, rng));
        l.b = make_param(name + ".b", num::TensorT<T>::zeros({out}));
        return l;
    }

    // 4x4 kernels throughout; stride 2 / pad 1 halves (conv) or doubles
    // (deconv) the spatial size.
    Layer conv(const std::string& name, std::int64_t cin, std::int64_t cout, Rng& rng) {
        Layer l;
        l.w = make_param(name + ".w", glorot({cout, cin, 4, 4}, cin * 16, cout * 16, rng));
        l.b = make_param(name + ".b", num::TensorT<T>::zeros({cout}));
        return l;
    }

    Layer deconv(const std::string& name, std::int64_t cin, std::int64_t cout, Rng& rng) {
        Layer l;
        l.w = make_param(name + ".w", glorot({cin, cout, 4, 4}, cin * 16, cout * 16, rng));
        l.b = make_param(name + ".b", num::TensorT<T>::zeros({cout}));
        return l;
    }

    static num::VarT<T> affine(const Layer& l, const num::VarT<T>& x) {
        return num::add(num::matmul(x, l.w), l.b);
    }

    std::int64_t checked_batch(const SensorBatchT<T>& frame) const {
        std::int64_t b = -1;
        auto need = [&](const num::TensorT<T>& t, std::int64_t want_rank, std::int64_t trailing,
                        const char* what) {
            if (t.numel() == 0)
                throw UsageError(std::string("encode: ") + what +
                                 " is a configured input but the frame carries none");
            const bool rank_ok = t.ndim() == want_rank;
            const bool tail_ok = rank_ok && (want_rank == 2 ? t.dim(1) == trailing
                                                            : t.dim(1) * t.dim(2) * t.dim(3) ==
                                                                  trailing);
            if (!rank_ok || !tail_ok)
                throw UsageError(std::string("encode: ") + what + " input has the wrong shape");
            if (b >= 0 && t.dim(0) != b)
                throw UsageError("encode: input modalities disagree on batch size");
            b = t.dim(0);
        };
        if (cfg_.in_proprio) need(frame.proprio, 2, kProprioDim, "proprioception");
        if (cfg_.in_vision) need(frame.vision, 4, 3 * kImageSize * kImageSize, "vision");
        if (cfg_.in_force) need(frame.force, 2, kForceDim, "force");
        return b;
    }

    LatentT<T> encode_impl(const SensorBatchT<T>& frame, Rng* sampler) const {
        const std::int64_t b = checked_batch(frame);
        std::vector<num::VarT<T>> trunks;
        if (cfg_.in_proprio) {
            auto x = num::VarT<T>::constant(frame.proprio);
            x = num::tanh_op(affine(enc_p0_, x));
            trunks.push_back(num::tanh_op(affine(enc_p1_, x)));
        }
        if (cfg_.in_vision) {
            auto x = num::VarT<T>::constant(frame.vision);
            x = num::relu(num::conv2d(x, conv0_.w, conv0_.b, 2, 1));  // [B, 8, 32, 32]
            x = num::relu(num::conv2d(x, conv1_.w, conv1_.b, 2, 1));  // [B, 16, 16, 16]
            x = num::relu(num::conv2d(x, conv2_.w, conv2_.b, 2, 1));  // [B, 32, 8, 8]
            x = num::reshape(x, {b, 32 * 8 * 8});
            trunks.push_back(num::relu(affine(enc_v_, x)));
        }
        if (cfg_.in_force) {
            auto x = num::VarT<T>::constant(frame.force);
            x = num::tanh_op(affine(enc_f0_, x));
            trunks.push_back(num::tanh_op(affine(enc_f1_, x)));
        }
        auto h = trunks.size() == 1 ? trunks.front() : num::concat(trunks, 1);
        h = num::tanh_op(affine(fuse_, h));

        LatentT<T> out;
        out.mu = affine(head_mu_, h);
        out.logvar = affine(head_logvar_, h);
        if (sampler) {
            num::TensorT<T> eps({b, cfg_.latent_dim});
            for (auto& v : eps.data) v = static_cast<T>(sampler->normal());
            out.z = num::add(out.mu, num::mul(num::exp_op(num::scale(out.logvar, T(0.5))),
                                              num::VarT<T>::constant(std::move(eps))));
        } else {
            out.z = out.mu;
        }
        return out;
    }

    ModalityConfig cfg_;
    std::vector<num::VarT<T>> params_;
    std::vector<std::string> names_;
    Layer enc_p0_, enc_p1_;
    Layer conv0_, conv1_, conv2_, enc_v_;
    Layer enc_f0_, enc_f1_;
    Layer fuse_, head_mu_, head_logvar_;
    Layer cond0_, cond1_;
    Layer dec_p0_, dec_p1_;
    Layer dec_f0_, dec_f1_;
    Layer dec_fl_, dfl0_, dfl1_, dfl2_;
};

using WorldModel = WorldModelT<float>;
using SensorBatch = SensorBatchT<float>;
using TargetBatch = TargetBatchT<float>;
using Latent = LatentT<float>;
using Prediction = PredictionT<float>;

/// ELBO pieces: `total` is the scalar loss node to backprop; the doubles are
/// the logged decomposition, with reconstructions as per-sample mean summed
/// squared error (unweighted) and kl as the per-sample mean KL to N(0, I).
template <class T>
struct ElboTermsT {
    num::VarT<T> total;
    double elbo = 0.0;
    double recon_proprio = 0.0;
    double recon_force = 0.0;
    double recon_flow = 0.0;
    double kl = 0.0;
};

/// L = sum_m w_m * SSE_m / B + beta * KL / B with the closed-form Gaussian
/// KL = -1/2 * sum(1 + logvar - mu^2 - exp(logvar)).
template <class T>
ElboTermsT<T> elbo_loss(const PredictionT<T>& pred, const TargetBatchT<T>& target,
                        const LatentT<T>& latent, const ModalityConfig& cfg) {
    if (!latent.mu.defined() || !latent.logvar.defined())
        throw UsageError("elbo_loss: latent must carry mu and logvar");
    const std::int64_t b = latent.mu.value().dim(0);
    const T inv_b = T(1) / static_cast<T>(b);

    num::VarT<T> total;
    auto accumulate = [&](const num::VarT<T>& term) {
        total = total.defined() ? num::add(total, term) : term;
    };
    auto recon = [&](const num::VarT<T>& p, const num::TensorT<T>& t, double w,
                     const char* what) -> double {
        if (!p.defined())
            throw UsageError(std::string("elbo_loss: missing prediction for ") + what);
        if (t.shape != p.value().shape)
            throw UsageError(std::string("elbo_loss: target shape mismatch for ") + what);
        auto mean_sse = num::scale(num::squared_error(p, num::VarT<T>::constant(t)), inv_b);
        accumulate(num::scale(mean_sse, static_cast<T>(w)));
        return static_cast<double>(mean_sse.value()[0]);
    };

    ElboTermsT<T> out;
    if (cfg.out_proprio) out.recon_proprio = recon(pred.proprio, target.proprio, cfg.w_proprio,
                                                   "proprioception");
    if (cfg.out_force) out.recon_force = recon(pred.force, target.force, cfg.w_force, "force");
    if (cfg.out_flow) out.recon_flow = recon(pred.flow, target.flow, cfg.w_flow, "flow");

    auto kl_elem = num::sub(num::sub(num::add_scalar(latent.logvar, T(1)),
                                     num::mul(latent.mu, latent.mu)),
                            num::exp_op(latent.logvar));
    auto kl_mean = num::scale(num::sum(kl_elem), T(-0.5) * inv_b);
    out.kl = static_cast<double>(kl_mean.value()[0]);
    accumulate(num::scale(kl_mean, static_cast<T>(cfg.beta)));

    out.total = total;
    out.elbo = static_cast<double>(total.value()[0]);
    return out;
}

/// Inference result with all intermediates (the analysis tools consume mu,
/// z and z_c) and the wall-clock cost of the pass.
template <class T>
struct PredictResultT {
    LatentT<T> latent;
    num::VarT<T> z_c;
    PredictionT<T> prediction;
    double millis = 0.0;
};

/// encode -> condition -> decode under a no-grad guard. Pass a sampler for
/// stochastic z (the default elsewhere), or none for mean-mode evaluation.
template <class T>
PredictResultT<T> predict(const WorldModelT<T>& model, const SensorBatchT<T>& frame,
                          const num::TensorT<T>& actions, Rng* sampler = nullptr) {
    num::NoGradGuard guard;
    const auto t0 = std::chrono::steady_clock::now();
    PredictResultT<T> out;
    out.latent = sampler ? model.encode(frame, *sampler) : model.encode(frame);
    out.z_c = model.condition(out.latent.z, actions);
    out.prediction = model.decode(out.z_c);
    out.millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace softperc::cvae
