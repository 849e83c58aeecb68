#include "dsrl/nn.hpp"

#include <cmath>
#include <cstdio>

#include "dsrl/errors.hpp"

namespace dsrl::nn {

std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ContractError("unknown activation: " + std::string(s));
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

bool DenseNet::finite() const {
    for (const Layer& l : layers) {
        for (double w : l.weights)
            if (!std::isfinite(w)) return false;
        for (double b : l.biases)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

DenseNet make_net(std::size_t input_dim, const std::vector<std::size_t>& layer_widths,
                  Activation hidden_activation, Activation output_activation, RngStream& rng) {
    if (input_dim == 0 || layer_widths.empty())
        throw ContractError("make_net: empty topology");
    DenseNet net;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < layer_widths.size(); ++i) {
        Layer layer;
        layer.in_dim = in;
        layer.out_dim = layer_widths[i];
        layer.activation =
            (i + 1 == layer_widths.size()) ? output_activation : hidden_activation;
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        layer.weights.resize(layer.out_dim * layer.in_dim);
        for (double& w : layer.weights) w = uniform_range(rng, -bound, bound);
        layer.biases.assign(layer.out_dim, 0.0);
        in = layer.out_dim;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

double activate(Activation a, double z) {
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : z;
}

double activate_deriv(Activation a, double z) {
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

void check_input(const DenseNet& net, std::span<const double> input) {
    if (input.size() != net.input_dim())
        throw ContractError("forward: input length " + std::to_string(input.size()) +
                            " does not match net input_dim " + std::to_string(net.input_dim()));
    for (double v : input)
        if (!std::isfinite(v)) throw ContractError("forward: non-finite input");
}

std::vector<double> layer_forward(const Layer& layer, const std::vector<double>& x,
                                  std::vector<double>* preact) {
    std::vector<double> out(layer.out_dim);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
        double z = layer.biases[o];
        const double* row = layer.weights.data() + o * layer.in_dim;
        for (std::size_t i = 0; i < layer.in_dim; ++i) z += row[i] * x[i];
        if (preact) (*preact)[o] = z;
        out[o] = activate(layer.activation, z);
    }
    return out;
}

}  // namespace

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    check_input(net, input);
    std::vector<double> x(input.begin(), input.end());
    for (const Layer& layer : net.layers) x = layer_forward(layer, x, nullptr);
    return x;
}

std::pair<std::vector<double>, Tape> forward_tape(const DenseNet& net,
                                                  std::span<const double> input) {
    check_input(net, input);
    Tape tape;
    tape.inputs.reserve(net.layers.size());
    tape.preactivations.reserve(net.layers.size());
    std::vector<double> x(input.begin(), input.end());
    for (const Layer& layer : net.layers) {
        tape.inputs.push_back(x);
        std::vector<double> z(layer.out_dim);
        x = layer_forward(layer, x, &z);
        tape.preactivations.push_back(std::move(z));
    }
    return {std::move(x), std::move(tape)};
}

Gradient Gradient::zeros_like(const DenseNet& net) {
    Gradient g;
    g.weights.reserve(net.layers.size());
    g.biases.reserve(net.layers.size());
    for (const Layer& l : net.layers) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.biases.emplace_back(l.biases.size(), 0.0);
    }
    return g;
}

void Gradient::add_scaled(const Gradient& other, double scale) {
    if (weights.size() != other.weights.size())
        throw ContractError("Gradient::add_scaled: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() != other.weights[l].size() ||
            biases[l].size() != other.biases[l].size())
            throw ContractError("Gradient::add_scaled: shape mismatch");
        for (std::size_t i = 0; i < weights[l].size(); ++i)
            weights[l][i] += scale * other.weights[l][i];
        for (std::size_t i = 0; i < biases[l].size(); ++i)
            biases[l][i] += scale * other.biases[l][i];
    }
}

void Gradient::scale(double factor) {
    for (auto& w : weights)
        for (double& v : w) v *= factor;
    for (auto& b : biases)
        for (double& v : b) v *= factor;
}

bool Gradient::finite() const {
    for (const auto& w : weights)
        for (double v : w)
            if (!std::isfinite(v)) return false;
    for (const auto& b : biases)
        for (double v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

void backward_accumulate(const DenseNet& net, const Tape& tape,
                         std::span<const double> output_grad, double scale, Gradient& into) {
    if (tape.inputs.size() != net.layers.size() ||
        tape.preactivations.size() != net.layers.size())
        throw ContractError("backward: tape does not match net layer count");
    if (into.weights.size() != net.layers.size())
        throw ContractError("backward: accumulator layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (tape.inputs[l].size() != net.layers[l].in_dim ||
            tape.preactivations[l].size() != net.layers[l].out_dim)
            throw ContractError("backward: tape shape mismatch at layer " + std::to_string(l));
        if (into.weights[l].size() != net.layers[l].weights.size() ||
            into.biases[l].size() != net.layers[l].biases.size())
            throw ContractError("backward: accumulator shape mismatch at layer " +
                                std::to_string(l));
    }
    if (output_grad.size() != net.output_dim())
        throw ContractError("backward: output_grad length mismatch");

    std::vector<double> g(output_grad.begin(), output_grad.end());
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& layer = net.layers[li];
        const std::vector<double>& x = tape.inputs[li];
        const std::vector<double>& z = tape.preactivations[li];

        std::vector<double> dz(layer.out_dim);
        for (std::size_t o = 0; o < layer.out_dim; ++o)
            dz[o] = g[o] * activate_deriv(layer.activation, z[o]);

        double* dw = into.weights[li].data();
        for (std::size_t o = 0; o < layer.out_dim; ++o) {
            const double sdz = scale * dz[o];
            for (std::size_t i = 0; i < layer.in_dim; ++i)
                dw[o * layer.in_dim + i] += sdz * x[i];
            into.biases[li][o] += sdz;
        }

        if (li > 0) {
            std::vector<double> gprev(layer.in_dim, 0.0);
            for (std::size_t o = 0; o < layer.out_dim; ++o) {
                const double* row = layer.weights.data() + o * layer.in_dim;
                for (std::size_t i = 0; i < layer.in_dim; ++i) gprev[i] += row[i] * dz[o];
            }
            g = std::move(gprev);
        }
    }
}

Gradient backward(const DenseNet& net, const Tape& tape, std::span<const double> output_grad) {
    Gradient grad = Gradient::zeros_like(net);
    backward_accumulate(net, tape, output_grad, 1.0, grad);
    return grad;
}

void backward_batch_accumulate(const DenseNet& net, std::span<const Tape> tapes,
                               const std::vector<std::vector<double>>& output_grads,
                               std::span<const double> scales, Gradient& into) {
    const std::size_t samples = tapes.size();
    if (output_grads.size() != samples || scales.size() != samples)
        throw ContractError("backward_batch_accumulate: sample count mismatch");
    if (into.weights.size() != net.layers.size())
        throw ContractError("backward_batch_accumulate: accumulator layer count mismatch");
    if (samples == 0) return;
    for (std::size_t s = 0; s < samples; ++s) {
        if (tapes[s].inputs.size() != net.layers.size() ||
            output_grads[s].size() != net.output_dim())
            throw ContractError("backward_batch_accumulate: tape or grad shape mismatch");
    }

    // Scale folds into the entry gradient; everything downstream is linear.
    std::vector<std::vector<double>> g(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        g[s].resize(net.output_dim());
        for (std::size_t o = 0; o < net.output_dim(); ++o)
            g[s][o] = scales[s] * output_grads[s][o];
    }

    std::vector<std::vector<double>> dz(samples);
    std::vector<double> row;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& layer = net.layers[li];
        for (std::size_t s = 0; s < samples; ++s) {
            if (tapes[s].inputs[li].size() != layer.in_dim ||
                tapes[s].preactivations[li].size() != layer.out_dim)
                throw ContractError("backward_batch_accumulate: tape shape mismatch");
            dz[s].resize(layer.out_dim);
            for (std::size_t o = 0; o < layer.out_dim; ++o)
                dz[s][o] = g[s][o] * activate_deriv(layer.activation, tapes[s].preactivations[li][o]);
        }

        double* dw = into.weights[li].data();
        row.assign(layer.in_dim, 0.0);
        for (std::size_t o = 0; o < layer.out_dim; ++o) {
            std::fill(row.begin(), row.end(), 0.0);
            double db = 0.0;
            for (std::size_t s = 0; s < samples; ++s) {
                const double d = dz[s][o];
                if (d == 0.0) continue;
                db += d;
                const double* x = tapes[s].inputs[li].data();
                for (std::size_t i = 0; i < layer.in_dim; ++i) row[i] += d * x[i];
            }
            for (std::size_t i = 0; i < layer.in_dim; ++i) dw[o * layer.in_dim + i] += row[i];
            into.biases[li][o] += db;
        }

        if (li > 0) {
            for (std::size_t s = 0; s < samples; ++s) {
                std::vector<double> gprev(layer.in_dim, 0.0);
                for (std::size_t o = 0; o < layer.out_dim; ++o) {
                    const double d = dz[s][o];
                    if (d == 0.0) continue;
                    const double* w = layer.weights.data() + o * layer.in_dim;
                    for (std::size_t i = 0; i < layer.in_dim; ++i) gprev[i] += w[i] * d;
                }
                g[s] = std::move(gprev);
            }
        }
    }
}

OptimizerState OptimizerState::sgd(double lr) {
    OptimizerState s;
    s.kind = Kind::sgd;
    s.learning_rate = lr;
    return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double eps) {
    OptimizerState s;
    s.kind = Kind::adam;
    s.learning_rate = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = eps;
    return s;
}

namespace {

void step_array(std::span<double> params, std::span<const double> grad, OptimizerState& opt,
                std::size_t slot) {
    if (opt.kind == OptimizerState::Kind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= opt.learning_rate * grad[i];
        return;
    }
    if (opt.m_slots.size() <= slot) {
        opt.m_slots.resize(slot + 1);
        opt.v_slots.resize(slot + 1);
    }
    std::vector<double>& m = opt.m_slots[slot];
    std::vector<double>& v = opt.v_slots[slot];
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    if (m.size() != params.size())
        throw ContractError("apply_update: optimizer state shape mismatch");

    const double t = static_cast<double>(opt.timestep);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
    }
}

}  // namespace

void apply_update(DenseNet& net, const Gradient& grad, OptimizerState& opt) {
    if (grad.weights.size() != net.layers.size())
        throw ContractError("apply_update: gradient layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (grad.weights[l].size() != net.layers[l].weights.size() ||
            grad.biases[l].size() != net.layers[l].biases.size())
            throw ContractError("apply_update: gradient shape mismatch at layer " +
                                std::to_string(l));
    }
    if (!grad.finite())
        throw DivergenceError("apply_update: non-finite gradient, refusing to update");

    if (opt.kind == OptimizerState::Kind::adam) ++opt.timestep;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        step_array(net.layers[l].weights, grad.weights[l], opt, 2 * l);
        step_array(net.layers[l].biases, grad.biases[l], opt, 2 * l + 1);
    }
}

void apply_update(std::vector<double>& params, std::span<const double> grad,
                  OptimizerState& opt) {
    if (params.size() != grad.size())
        throw ContractError("apply_update: flat gradient size mismatch");
    for (double g : grad)
        if (!std::isfinite(g))
            throw DivergenceError("apply_update: non-finite gradient, refusing to update");
    if (opt.kind == OptimizerState::Kind::adam) ++opt.timestep;
    step_array(params, grad, opt, 0);
}

double grad_check(const DenseNet& net, const ScalarLoss& loss, std::span<const double> input,
                  double h) {
    auto [output, tape] = forward_tape(net, input);
    const std::vector<double> out_grad = loss.grad(output);
    const Gradient analytic = backward(net, tape, out_grad);

    DenseNet probe = net;
    double max_rel = 0.0;
    auto probe_param = [&](double& p, double a) {
        const double saved = p;
        p = saved + h;
        const double up = loss.value(forward(probe, input));
        p = saved - h;
        const double down = loss.value(forward(probe, input));
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
        max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        for (std::size_t i = 0; i < probe.layers[l].weights.size(); ++i)
            probe_param(probe.layers[l].weights[i], analytic.weights[l][i]);
        for (std::size_t i = 0; i < probe.layers[l].biases.size(); ++i)
            probe_param(probe.layers[l].biases[i], analytic.biases[l][i]);
    }
    return max_rel;
}

}  // namespace dsrl::nn
