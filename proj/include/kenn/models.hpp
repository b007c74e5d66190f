#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kenn/nn/grad_check.hpp"
#include "kenn/nn/param_store.hpp"
#include "kenn/nn/tape.hpp"
#include "kenn/rng.hpp"

namespace kenn {

enum class ModelKind { naive, deepkenn, odekenn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Shared CNN encoder layout. The defaults reproduce the 28x28 architecture
// (stage flat dims 1568/784/288/128/64, 51,264 encoder parameters); smaller
// configs exist for fast gradient checks on tiny inputs.
struct ModelConfig {
    int in_h = 28;
    int in_w = 28;
    std::vector<int> conv_channels = {8, 16, 32};
    int first_kernel = 5;  // later conv stages use 3x3
    int fc1_dim = 128;
    int feature_dim = 64;
    int ode_steps = 10;

    struct ConvStage {
        int channels, h, w;  // post-pool
        int flat() const { return channels * h * w; }
    };

    std::vector<ConvStage> conv_stages() const;
    int conv_flat() const { return conv_stages().back().flat(); }

    // Flattened distance-stage dims: conv stages, fc1, fc2, and for
    // naive/deepkenn the extra FC+tanh head.
    std::vector<std::pair<std::string, int>> stage_layout(ModelKind kind) const;

    bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct Model {
    ModelKind kind = ModelKind::naive;
    ModelConfig config;
    ParamStore<T> params;
};

// Seed-controlled initialization: He-uniform before ReLU, Xavier-uniform on
// the linear/tanh layers, weight logits at softplus^-1(1) so every
// effective weight starts at 1.
template <class T>
Model<T> make_model(ModelKind kind, const ModelConfig& config, uint64_t seed);

int64_t param_count(ModelKind kind, const ModelConfig& config = {});

// Effective distance weights: softplus(stage logits) for deepkenn,
// softplus(time logits) for odekenn. Rejected for naive.
template <class T>
std::vector<double> effective_weights(const Model<T>& model);

// The ordered intermediate representations of one batch of inputs,
// flattened per stage (plus head output when the model has a head).
template <class T>
struct FeatureStack {
    std::vector<std::string> names;
    std::vector<Tensor<T>> stages;  // each [B, d_k]
};

template <class T>
struct Trajectory {
    std::vector<Tensor<T>> states;  // N+1 states, each [B, d]
    T dt = T(0);
};

// Classical fixed-step RK4 on tape; returns the N+1 recorded states.
// Differentiable end-to-end by construction (discretize-then-optimize).
template <class T, class Field>
std::vector<typename Tape<T>::Ref> rk4_states_on_tape(Tape<T>& tape, Field&& phi,
                                                      typename Tape<T>::Ref h0, int steps, T dt) {
    if (steps < 1) throw input_error("rk4: need at least one step");
    std::vector<typename Tape<T>::Ref> states;
    states.reserve(static_cast<size_t>(steps) + 1);
    states.push_back(h0);
    auto h = h0;
    for (int s = 0; s < steps; ++s) {
        const auto k1 = phi(tape, h);
        const auto k2 = phi(tape, tape.axpy(dt / T(2), k1, h));
        const auto k3 = phi(tape, tape.axpy(dt / T(2), k2, h));
        const auto k4 = phi(tape, tape.axpy(dt, k3, h));
        const auto s14 = tape.add(k1, k4);
        const auto s23 = tape.add(k2, k3);
        h = tape.axpy(dt / T(6), s14, tape.axpy(dt / T(3), s23, h));
        if (!tape.val(h).all_finite())
            throw numeric_error("trajectory blow-up: non-finite ODE state at step " +
                                std::to_string(s + 1));
        states.push_back(h);
    }
    return states;
}

// Value-level RK4 over a plain vector field (integration horizon [0,1]).
template <class T>
Trajectory<T> rk4_solve(const std::function<Tensor<T>(const Tensor<T>&)>& phi,
                        const Tensor<T>& h0, int steps);

// Wires a model's parameters into one tape and builds per-batch graphs.
template <class T>
class TapeGraph {
public:
    using Ref = typename Tape<T>::Ref;

    TapeGraph(Tape<T>& tape, const Model<T>& model) : tape_(&tape), model_(&model) {
        refs_.reserve(static_cast<size_t>(model.params.size()));
        for (int i = 0; i < model.params.size(); ++i)
            refs_.push_back(tape.input(model.params[i].value));
    }

    // Build from pre-created leaves (grad-check path).
    TapeGraph(Tape<T>& tape, const Model<T>& model, std::vector<Ref> param_refs)
        : tape_(&tape), model_(&model), refs_(std::move(param_refs)) {}

    Ref ref(const std::string& name) const {
        for (int i = 0; i < model_->params.size(); ++i)
            if (model_->params[i].name == name) return refs_[static_cast<size_t>(i)];
        throw input_error("TapeGraph: unknown parameter '" + name + "'");
    }

    // images [B,1,H,W] -> fc2 output [B, feature_dim]; optionally collects
    // the flattened encoder stages (convs post-pool, fc1, fc2). The conv
    // stack runs planes-last so the batch dim is the SIMD axis.
    Ref encode(Ref images, std::vector<Ref>* stages = nullptr) {
        auto& t = *tape_;
        const auto& cfg = model_->config;
        const auto& img = t.val(images);
        if (img.rank() != 4 || img.dim(1) != 1 || img.dim(2) != cfg.in_h || img.dim(3) != cfg.in_w)
            throw input_error("encode: expected input of shape [B,1," + std::to_string(cfg.in_h) +
                              "," + std::to_string(cfg.in_w) + "]");
        Ref h = t.to_planes(images);
        for (size_t s = 0; s < cfg.conv_channels.size(); ++s) {
            const int k = s == 0 ? cfg.first_kernel : 3;
            const std::string name = "conv" + std::to_string(s + 1);
            h = t.maxpool2_pl(t.relu(t.conv2d_pl(h, ref(name + ".w"), ref(name + ".b"), (k - 1) / 2)));
            if (stages) stages->push_back(t.to_rows(h));
        }
        h = t.relu(t.linear(t.to_rows(h), ref("fc1.w"), ref("fc1.b")));
        if (stages) stages->push_back(h);
        h = t.linear(h, ref("fc2.w"), ref("fc2.b"));
        if (stages) stages->push_back(h);
        return h;
    }

    Ref head(Ref fc2_out) {
        return tape_->tanh_act(tape_->linear(fc2_out, ref("head.w"), ref("head.b")));
    }

    Ref ode_field(Ref h) {
        return tape_->tanh_act(tape_->linear(h, ref("ode.w"), ref("ode.b")));
    }

    std::vector<Ref> rk4_states(Ref h0) {
        const T dt = T(1) / static_cast<T>(model_->config.ode_steps);
        return rk4_states_on_tape<T>(
            *tape_, [this](Tape<T>&, Ref h) { return ode_field(h); }, h0,
            model_->config.ode_steps, dt);
    }

    // Batched pair distance [B]; odekenn stacks both batches into one ODE
    // solve of batch 2B and splits the trajectory afterwards.
    Ref pair_distance(Ref imgs_a, Ref imgs_b) {
        auto& t = *tape_;
        const int batch = t.val(imgs_a).dim(0);
        switch (model_->kind) {
            case ModelKind::naive: {
                const auto ha = head(encode(imgs_a));
                const auto hb = head(encode(imgs_b));
                return t.sqrt_guard(t.rowwise_sqdist(ha, hb));
            }
            case ModelKind::deepkenn: {
                std::vector<Ref> sa, sb;
                const auto fa = encode(imgs_a, &sa);
                const auto fb = encode(imgs_b, &sb);
                sa.push_back(head(fa));
                sb.push_back(head(fb));
                const auto lambdas = t.softplus(ref("stage_logits"));
                Ref acc = -1;
                for (size_t k = 0; k < sa.size(); ++k) {
                    const auto term =
                        t.pick_scale(t.rowwise_sqdist(sa[k], sb[k]), lambdas, static_cast<int>(k));
                    acc = k == 0 ? term : t.add(acc, term);
                }
                return t.sqrt_guard(acc);
            }
            case ModelKind::odekenn: {
                const auto h0a = encode(imgs_a);
                const auto h0b = encode(imgs_b);
                const auto joint = t.concat_rows(h0a, h0b);
                const auto states = rk4_states(joint);
                const auto lambdas = t.softplus(ref("time_logits"));
                const int steps = model_->config.ode_steps;
                const T dt = T(1) / static_cast<T>(steps);
                Ref acc = -1;
                for (int k = 0; k < steps; ++k) {  // left endpoints t_k = k/N
                    const auto sa = t.slice_rows(states[static_cast<size_t>(k)], 0, batch);
                    const auto sb =
                        t.slice_rows(states[static_cast<size_t>(k)], batch, 2 * batch);
                    const auto term = t.pick_scale(t.rowwise_sqdist(sa, sb), lambdas, k);
                    acc = k == 0 ? term : t.add(acc, term);
                }
                return t.sqrt_guard(t.scale(dt, acc));
            }
        }
        throw input_error("pair_distance: unknown model kind");
    }

    std::vector<Tensor<T>> param_grads() const {
        std::vector<Tensor<T>> out;
        out.reserve(refs_.size());
        for (auto r : refs_) out.push_back(tape_->grad(r));
        return out;
    }

    const std::vector<Ref>& param_refs() const { return refs_; }

private:
    Tape<T>* tape_;
    const Model<T>* model_;
    std::vector<Ref> refs_;
};

// ---- value-level wrappers (forward only) ----

template <class T>
FeatureStack<T> encode(const Model<T>& model, const Tensor<T>& images);

template <class T>
std::vector<double> pair_distances(const Model<T>& model, const Tensor<T>& imgs_a,
                                   const Tensor<T>& imgs_b);

template <class T>
double naive_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
double deepkenn_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
double odekenn_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b);

// Trajectory of the model's ODE from initial features h0 [B, d].
template <class T>
Trajectory<T> solve_trajectory(const Model<T>& model, const Tensor<T>& h0);

// One stacked solve of batch 2B, split back; exactly equal to two separate
// solves because every op acts rowwise.
template <class T>
std::pair<Trajectory<T>, Trajectory<T>> joint_batch_solve(const Model<T>& model,
                                                          const Tensor<T>& h0_a,
                                                          const Tensor<T>& h0_b);

// Per-item flat embeddings e_i with d(i,j) = sqrt(|e_i - e_j|^2 + guard);
// used by pairwise-matrix pipelines so each item is encoded once.
template <class T>
std::vector<std::vector<T>> surrogate_embeddings(const Model<T>& model, const Tensor<T>& images);

// ---- implementation ----

inline std::vector<ModelConfig::ConvStage> ModelConfig::conv_stages() const {
    if (in_h < 1 || in_w < 1 || conv_channels.empty() || fc1_dim < 1 || feature_dim < 1 ||
        ode_steps < 1)
        throw input_error("ModelConfig: invalid dimensions");
    std::vector<ConvStage> out;
    int h = in_h, w = in_w;
    for (int ch : conv_channels) {
        h /= 2;
        w /= 2;
        if (h < 1 || w < 1)
            throw input_error("ModelConfig: input too small for the conv/pool stack");
        out.push_back({ch, h, w});
    }
    return out;
}

inline std::vector<std::pair<std::string, int>> ModelConfig::stage_layout(ModelKind kind) const {
    std::vector<std::pair<std::string, int>> out;
    const auto convs = conv_stages();
    for (size_t i = 0; i < convs.size(); ++i)
        out.emplace_back("conv" + std::to_string(i + 1), convs[i].flat());
    out.emplace_back("fc1", fc1_dim);
    out.emplace_back("fc2", feature_dim);
    if (kind != ModelKind::odekenn) out.emplace_back("head", feature_dim);
    return out;
}

inline std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::naive: return "naive";
        case ModelKind::deepkenn: return "deepkenn";
        case ModelKind::odekenn: return "odekenn";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "naive") return ModelKind::naive;
    if (s == "deepkenn") return ModelKind::deepkenn;
    if (s == "odekenn") return ModelKind::odekenn;
    throw input_error("unknown model '" + s + "' (expected naive|deepkenn|odekenn)");
}

template <class T>
Model<T> make_model(ModelKind kind, const ModelConfig& config, uint64_t seed) {
    Model<T> model;
    model.kind = kind;
    model.config = config;
    Rng rng(mix_seed(seed, 0x6d6f64656cull));

    auto uniform_tensor = [&](std::vector<int> shape, double limit) {
        Tensor<T> t = Tensor<T>::zeros(std::move(shape));
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
        return t;
    };
    auto he = [&](std::vector<int> shape, int fan_in) {
        return uniform_tensor(std::move(shape), std::sqrt(6.0 / fan_in));
    };
    auto xavier = [&](std::vector<int> shape, int fan_in, int fan_out) {
        return uniform_tensor(std::move(shape), std::sqrt(6.0 / (fan_in + fan_out)));
    };

    auto& p = model.params;
    int cin = 1;
    for (size_t s = 0; s < config.conv_channels.size(); ++s) {
        const int k = s == 0 ? config.first_kernel : 3;
        const int cout = config.conv_channels[s];
        const std::string name = "conv" + std::to_string(s + 1);
        p.add(name + ".w", he({cout, cin, k, k}, cin * k * k));
        p.add(name + ".b", Tensor<T>::zeros({cout}));
        cin = cout;
    }
    const int flat = config.conv_flat();
    p.add("fc1.w", he({config.fc1_dim, flat}, flat));
    p.add("fc1.b", Tensor<T>::zeros({config.fc1_dim}));
    p.add("fc2.w", xavier({config.feature_dim, config.fc1_dim}, config.fc1_dim, config.feature_dim));
    p.add("fc2.b", Tensor<T>::zeros({config.feature_dim}));

    const T logit_one = static_cast<T>(softplus_inverse(1.0));
    switch (kind) {
        case ModelKind::naive:
        case ModelKind::deepkenn:
            p.add("head.w", xavier({config.feature_dim, config.feature_dim}, config.feature_dim,
                                   config.feature_dim));
            p.add("head.b", Tensor<T>::zeros({config.feature_dim}));
            if (kind == ModelKind::deepkenn) {
                const int n_stages = static_cast<int>(config.stage_layout(kind).size());
                p.add("stage_logits", Tensor<T>::full({n_stages}, logit_one));
            }
            break;
        case ModelKind::odekenn:
            p.add("ode.w", xavier({config.feature_dim, config.feature_dim}, config.feature_dim,
                                  config.feature_dim));
            p.add("ode.b", Tensor<T>::zeros({config.feature_dim}));
            p.add("time_logits", Tensor<T>::full({config.ode_steps}, logit_one));
            break;
    }
    return model;
}

inline int64_t param_count(ModelKind kind, const ModelConfig& config) {
    return make_model<float>(kind, config, 0).params.total_parameters();
}

template <class T>
std::vector<double> effective_weights(const Model<T>& model) {
    const char* name = nullptr;
    if (model.kind == ModelKind::deepkenn) name = "stage_logits";
    else if (model.kind == ModelKind::odekenn) name = "time_logits";
    else throw input_error("no learnable distance weights for the naive model");
    const auto& logits = model.params.at(name).value;
    std::vector<double> out;
    out.reserve(logits.data.size());
    for (auto v : logits.data) out.push_back(softplus(static_cast<double>(v)));
    return out;
}

template <class T>
FeatureStack<T> encode(const Model<T>& model, const Tensor<T>& images) {
    Tape<T> tape;
    TapeGraph<T> graph(tape, model);
    std::vector<typename Tape<T>::Ref> stage_refs;
    const auto fc2 = graph.encode(tape.input(images), &stage_refs);
    if (model.kind != ModelKind::odekenn) stage_refs.push_back(graph.head(fc2));
    FeatureStack<T> stack;
    for (const auto& [name, dim] : model.config.stage_layout(model.kind)) {
        stack.names.push_back(name);
        (void)dim;
    }
    for (auto r : stage_refs) stack.stages.push_back(tape.val(r));
    return stack;
}

template <class T>
std::vector<double> pair_distances(const Model<T>& model, const Tensor<T>& imgs_a,
                                   const Tensor<T>& imgs_b) {
    Tape<T> tape;
    TapeGraph<T> graph(tape, model);
    const auto d = graph.pair_distance(tape.input(imgs_a), tape.input(imgs_b));
    const auto& v = tape.val(d);
    return std::vector<double>(v.data.begin(), v.data.end());
}

namespace detail {
template <class T>
double single_pair_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> ta = a, tb = b;
    if (ta.rank() == 2) ta.shape = {1, 1, a.dim(0), a.dim(1)};
    if (tb.rank() == 2) tb.shape = {1, 1, b.dim(0), b.dim(1)};
    return pair_distances(model, ta, tb)[0];
}
}  // namespace detail

template <class T>
double naive_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b) {
    if (model.kind != ModelKind::naive) throw input_error("naive_distance: wrong model kind");
    return detail::single_pair_distance(model, a, b);
}

template <class T>
double deepkenn_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b) {
    if (model.kind != ModelKind::deepkenn) throw input_error("deepkenn_distance: wrong model kind");
    return detail::single_pair_distance(model, a, b);
}

template <class T>
double odekenn_distance(const Model<T>& model, const Tensor<T>& a, const Tensor<T>& b) {
    if (model.kind != ModelKind::odekenn) throw input_error("odekenn_distance: wrong model kind");
    return detail::single_pair_distance(model, a, b);
}

template <class T>
Trajectory<T> rk4_solve(const std::function<Tensor<T>(const Tensor<T>&)>& phi,
                        const Tensor<T>& h0, int steps) {
    if (steps < 1) throw input_error("rk4_solve: need at least one step");
    const T dt = T(1) / static_cast<T>(steps);
    Trajectory<T> traj;
    traj.dt = dt;
    traj.states.push_back(h0);
    Tensor<T> h = h0;
    auto saxpy = [](T alpha, const Tensor<T>& x, const Tensor<T>& y) {
        Tensor<T> out = y;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * x.data[i];
        return out;
    };
    for (int s = 0; s < steps; ++s) {
        const auto k1 = phi(h);
        const auto k2 = phi(saxpy(dt / T(2), k1, h));
        const auto k3 = phi(saxpy(dt / T(2), k2, h));
        const auto k4 = phi(saxpy(dt, k3, h));
        Tensor<T> next = h;
        for (size_t i = 0; i < next.data.size(); ++i)
            next.data[i] += dt / T(6) * (k1.data[i] + T(2) * k2.data[i] + T(2) * k3.data[i] +
                                         k4.data[i]);
        if (!next.all_finite())
            throw numeric_error("trajectory blow-up: non-finite ODE state at step " +
                                std::to_string(s + 1));
        traj.states.push_back(next);
        h = std::move(next);
    }
    return traj;
}

template <class T>
Trajectory<T> solve_trajectory(const Model<T>& model, const Tensor<T>& h0) {
    if (model.kind != ModelKind::odekenn)
        throw input_error("solve_trajectory: model has no ODE component");
    Tape<T> tape;
    TapeGraph<T> graph(tape, model);
    const auto states = graph.rk4_states(tape.input(h0));
    Trajectory<T> traj;
    traj.dt = T(1) / static_cast<T>(model.config.ode_steps);
    for (auto r : states) traj.states.push_back(tape.val(r));
    return traj;
}

template <class T>
std::pair<Trajectory<T>, Trajectory<T>> joint_batch_solve(const Model<T>& model,
                                                          const Tensor<T>& h0_a,
                                                          const Tensor<T>& h0_b) {
    if (!h0_a.same_shape(h0_b)) throw input_error("joint_batch_solve: batch shapes must match");
    const int batch = h0_a.dim(0), d = h0_a.dim(1);
    Tensor<T> joint = Tensor<T>::zeros({2 * batch, d});
    std::copy(h0_a.data.begin(), h0_a.data.end(), joint.data.begin());
    std::copy(h0_b.data.begin(), h0_b.data.end(), joint.data.begin() + h0_a.numel());
    const auto traj = solve_trajectory(model, joint);
    Trajectory<T> ta, tb;
    ta.dt = tb.dt = traj.dt;
    for (const auto& s : traj.states) {
        Tensor<T> a = Tensor<T>::zeros({batch, d}), b = Tensor<T>::zeros({batch, d});
        std::copy(s.data.begin(), s.data.begin() + a.numel(), a.data.begin());
        std::copy(s.data.begin() + a.numel(), s.data.end(), b.data.begin());
        ta.states.push_back(std::move(a));
        tb.states.push_back(std::move(b));
    }
    return {std::move(ta), std::move(tb)};
}

template <class T>
std::vector<std::vector<T>> surrogate_embeddings(const Model<T>& model, const Tensor<T>& images) {
    Tape<T> tape;
    TapeGraph<T> graph(tape, model);
    const int n = images.dim(0);
    std::vector<std::vector<T>> out(static_cast<size_t>(n));

    auto append_scaled = [&](const Tensor<T>& stage, T factor) {
        const int d = stage.dim(1);
        for (int i = 0; i < n; ++i) {
            const T* row = stage.data.data() + static_cast<int64_t>(i) * d;
            auto& e = out[static_cast<size_t>(i)];
            const size_t base = e.size();
            e.resize(base + static_cast<size_t>(d));
            for (int j = 0; j < d; ++j) e[base + static_cast<size_t>(j)] = factor * row[j];
        }
    };

    const auto img_ref = tape.input(images);
    switch (model.kind) {
        case ModelKind::naive: {
            const auto h = graph.head(graph.encode(img_ref));
            append_scaled(tape.val(h), T(1));
            break;
        }
        case ModelKind::deepkenn: {
            std::vector<typename Tape<T>::Ref> stages;
            const auto fc2 = graph.encode(img_ref, &stages);
            stages.push_back(graph.head(fc2));
            const auto lambdas = effective_weights(model);
            for (size_t k = 0; k < stages.size(); ++k)
                append_scaled(tape.val(stages[k]), static_cast<T>(std::sqrt(lambdas[k])));
            break;
        }
        case ModelKind::odekenn: {
            const auto h0 = graph.encode(img_ref);
            const auto states = graph.rk4_states(h0);
            const auto lambdas = effective_weights(model);
            const T dt = T(1) / static_cast<T>(model.config.ode_steps);
            for (int k = 0; k < model.config.ode_steps; ++k)
                append_scaled(tape.val(states[static_cast<size_t>(k)]),
                              static_cast<T>(std::sqrt(lambdas[static_cast<size_t>(k)] * dt)));
            break;
        }
    }
    return out;
}

}  // namespace kenn
