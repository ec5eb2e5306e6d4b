#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tspsro/errors.hpp"
#include "tspsro/rng.hpp"

namespace tspsro {

enum class Activation { relu, sigmoid, identity };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    throw InvalidParameter("activation_name: unknown activation");
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw InvalidParameter("activation_from_name: unknown activation '" + s + "'");
}

// One dense layer: y = act(W x + b), W stored row-major with shape
// out_dim x in_dim.
struct DenseLayer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> W;
    std::vector<double> b;
    Activation act = Activation::identity;
};

struct DenseNet {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
};

inline void validate_net(const DenseNet& net) {
    if (net.layers.empty()) throw ShapeError("validate_net: empty network");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        if (layer.in_dim <= 0 || layer.out_dim <= 0) {
            throw ShapeError("validate_net: non-positive layer dimension");
        }
        if (layer.W.size() != static_cast<std::size_t>(layer.in_dim) * static_cast<std::size_t>(layer.out_dim) ||
            layer.b.size() != static_cast<std::size_t>(layer.out_dim)) {
            throw ShapeError("validate_net: parameter shape does not match layer dimensions");
        }
        if (l > 0 && net.layers[l - 1].out_dim != layer.in_dim) {
            throw ShapeError("validate_net: consecutive layer dimensions do not chain");
        }
        for (double w : layer.W) {
            if (!std::isfinite(w)) throw ShapeError("validate_net: non-finite weight");
        }
        for (double v : layer.b) {
            if (!std::isfinite(v)) throw ShapeError("validate_net: non-finite bias");
        }
    }
}

// Fresh network with weights ~ N(0, 1/in_dim) per layer and zero biases.
inline DenseNet make_net(const std::vector<int>& dims, const std::vector<Activation>& acts, Rng& rng) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1) {
        throw ShapeError("make_net: need n+1 dims for n activations");
    }
    DenseNet net;
    net.layers.resize(acts.size());
    for (std::size_t l = 0; l < acts.size(); ++l) {
        DenseLayer& layer = net.layers[l];
        layer.in_dim = dims[l];
        layer.out_dim = dims[l + 1];
        layer.act = acts[l];
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
        layer.W.resize(static_cast<std::size_t>(layer.in_dim) * static_cast<std::size_t>(layer.out_dim));
        for (double& w : layer.W) w = rng.normal(0.0, scale);
        layer.b.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
    }
    validate_net(net);
    return net;
}

// Per-layer activations captured by forward; backward consumes it.
struct ForwardCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // W x + b per layer
    std::vector<std::vector<double>> post;  // act(pre) per layer
};

namespace detail {

inline double apply_act(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::identity: return z;
    }
    return z;
}

// Derivative of the activation expressed through pre-activation z and
// activation value y (sigmoid'(z) = y(1-y) avoids recomputing exp).
inline double act_derivative(Activation a, double z, double y) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

}  // namespace detail

inline std::vector<double> forward(const DenseNet& net, const std::vector<double>& input,
                                   ForwardCache* cache = nullptr) {
    if (net.layers.empty()) throw ShapeError("forward: empty network");
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw ShapeError("forward: input dimension " + std::to_string(input.size()) +
                         " does not match first layer " + std::to_string(net.input_dim()));
    }
    if (cache) {
        cache->input = input;
        cache->pre.assign(net.layers.size(), {});
        cache->post.assign(net.layers.size(), {});
    }
    std::vector<double> x = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        std::vector<double> z(static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            double acc = layer.b[static_cast<std::size_t>(o)];
            const double* row = layer.W.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in_dim);
            for (int i = 0; i < layer.in_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = acc;
        }
        std::vector<double> y(z.size());
        for (std::size_t o = 0; o < z.size(); ++o) y[o] = detail::apply_act(layer.act, z[o]);
        if (cache) {
            cache->pre[l] = z;
            cache->post[l] = y;
        }
        x = std::move(y);
    }
    return x;
}

// Gradients with the same shapes as the network parameters.
struct NetGrads {
    std::vector<std::vector<double>> dW;
    std::vector<std::vector<double>> db;
};

inline NetGrads zero_grads(const DenseNet& net) {
    NetGrads g;
    g.dW.resize(net.layers.size());
    g.db.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        g.dW[l].assign(net.layers[l].W.size(), 0.0);
        g.db[l].assign(net.layers[l].b.size(), 0.0);
    }
    return g;
}

inline void accumulate_grads(NetGrads& into, const NetGrads& from, double scale = 1.0) {
    if (into.dW.size() != from.dW.size()) throw ShapeError("accumulate_grads: layer count mismatch");
    for (std::size_t l = 0; l < into.dW.size(); ++l) {
        if (into.dW[l].size() != from.dW[l].size() || into.db[l].size() != from.db[l].size()) {
            throw ShapeError("accumulate_grads: layer shape mismatch");
        }
        for (std::size_t k = 0; k < into.dW[l].size(); ++k) into.dW[l][k] += scale * from.dW[l][k];
        for (std::size_t k = 0; k < into.db[l].size(); ++k) into.db[l][k] += scale * from.db[l][k];
    }
}

inline void scale_grads(NetGrads& g, double scale) {
    for (auto& layer : g.dW)
        for (double& v : layer) v *= scale;
    for (auto& layer : g.db)
        for (double& v : layer) v *= scale;
}

// Reverse-mode gradients of the forward map. `output_gradient` is dL/dy for
// the network output y; appends into `grads` (accumulation across a batch)
// and returns dL/dinput.
inline std::vector<double> backward(const DenseNet& net, const ForwardCache& cache,
                                    const std::vector<double>& output_gradient, NetGrads& grads) {
    const std::size_t L = net.layers.size();
    if (cache.pre.size() != L || cache.post.size() != L ||
        static_cast<int>(cache.input.size()) != net.input_dim()) {
        throw ShapeError("backward: cache does not match network");
    }
    if (grads.dW.size() != L || grads.db.size() != L) {
        throw ShapeError("backward: gradient accumulator does not match network");
    }
    if (static_cast<int>(output_gradient.size()) != net.output_dim()) {
        throw ShapeError("backward: output gradient dimension mismatch");
    }
    std::vector<double> delta = output_gradient;
    for (std::size_t li = L; li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        if (cache.pre[li].size() != static_cast<std::size_t>(layer.out_dim)) {
            throw ShapeError("backward: stale cache for layer " + std::to_string(li));
        }
        // through the activation
        std::vector<double> dz(static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            const std::size_t so = static_cast<std::size_t>(o);
            dz[so] = delta[so] * detail::act_derivative(layer.act, cache.pre[li][so], cache.post[li][so]);
        }
        const std::vector<double>& x = (li == 0) ? cache.input : cache.post[li - 1];
        std::vector<double>& dW = grads.dW[li];
        std::vector<double>& db = grads.db[li];
        std::vector<double> dx(static_cast<std::size_t>(layer.in_dim), 0.0);
        for (int o = 0; o < layer.out_dim; ++o) {
            const std::size_t so = static_cast<std::size_t>(o);
            db[so] += dz[so];
            const std::size_t row = so * static_cast<std::size_t>(layer.in_dim);
            for (int i = 0; i < layer.in_dim; ++i) {
                const std::size_t si = static_cast<std::size_t>(i);
                dW[row + si] += dz[so] * x[si];
                dx[si] += dz[so] * layer.W[row + si];
            }
        }
        delta = std::move(dx);
    }
    return delta;
}

// --- flat parameter views (optimizer + finite-difference tests) ---

inline std::vector<double> flatten_params(const DenseNet& net) {
    std::vector<double> flat;
    for (const DenseLayer& layer : net.layers) {
        flat.insert(flat.end(), layer.W.begin(), layer.W.end());
        flat.insert(flat.end(), layer.b.begin(), layer.b.end());
    }
    return flat;
}

inline void set_params(DenseNet& net, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (DenseLayer& layer : net.layers) {
        if (pos + layer.W.size() + layer.b.size() > flat.size()) {
            throw ShapeError("set_params: flat vector too short");
        }
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + layer.W.size()), layer.W.begin());
        pos += layer.W.size();
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + layer.b.size()), layer.b.begin());
        pos += layer.b.size();
    }
    if (pos != flat.size()) throw ShapeError("set_params: flat vector size mismatch");
}

inline std::vector<double> flatten_grads(const NetGrads& g) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
        flat.insert(flat.end(), g.dW[l].begin(), g.dW[l].end());
        flat.insert(flat.end(), g.db[l].begin(), g.db[l].end());
    }
    return flat;
}

// Adam over a flat parameter vector, with decoupled weight decay: the decay
// term is added to the update (wd · p), not to the moment estimates.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double lr = 0.001;
    double lr_decay = 1.0;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(std::size_t param_count, double lr, double lr_decay = 1.0,
                           double weight_decay = 0.0) {
    AdamState s;
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
    s.lr = lr;
    s.lr_decay = lr_decay;
    s.weight_decay = weight_decay;
    return s;
}

inline void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != state.m.size() || grads.size() != state.m.size()) {
        throw ShapeError("adam_step: shape mismatch");
    }
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
        const double mhat = state.m[k] / b1t;
        const double vhat = state.v[k] / b2t;
        params[k] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * params[k]);
    }
}

// Caller signals an epoch boundary; the learning rate decays multiplicatively.
inline void adam_epoch_end(AdamState& state) { state.lr *= state.lr_decay; }

// Numerically stable softmax: the max logit is subtracted before
// exponentiation, so arbitrarily large inputs do not overflow.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace tspsro
