#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsrl/rng.hpp"

namespace dsrl::nn {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct Layer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> weights;  // out_dim x in_dim, row-major
    std::vector<double> biases;   // out_dim
    Activation activation = Activation::identity;
};

// Fixed-topology dense feed-forward net, double precision throughout.
struct DenseNet {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
    std::size_t parameter_count() const;
    bool finite() const;
};

// He-style uniform fan-in init (bound sqrt(6/fan_in)), biases zero, seeded.
DenseNet make_net(std::size_t input_dim, const std::vector<std::size_t>& layer_widths,
                  Activation hidden_activation, Activation output_activation, RngStream& rng);

// Activation record from one forward pass; everything backward needs to
// reproduce exact gradients for that input.
struct Tape {
    std::vector<std::vector<double>> inputs;          // per layer, the layer's input
    std::vector<std::vector<double>> preactivations;  // per layer, W*x + b
};

struct Gradient {
    std::vector<std::vector<double>> weights;  // per layer, shape mirrors Layer::weights
    std::vector<std::vector<double>> biases;

    static Gradient zeros_like(const DenseNet& net);
    void add_scaled(const Gradient& other, double scale);  // this += scale * other
    void scale(double factor);
    bool finite() const;
};

std::vector<double> forward(const DenseNet& net, std::span<const double> input);
std::pair<std::vector<double>, Tape> forward_tape(const DenseNet& net,
                                                  std::span<const double> input);

// Jacobian-transpose product: gradient of the scalar loss whose gradient
// w.r.t. the network output is output_grad.
Gradient backward(const DenseNet& net, const Tape& tape, std::span<const double> output_grad);

// Accumulating form: into += scale * backward(net, tape, output_grad),
// without allocating a fresh Gradient.
void backward_accumulate(const DenseNet& net, const Tape& tape,
                         std::span<const double> output_grad, double scale, Gradient& into);

// Whole-batch form: into += sum_s scales[s] * backward(net, tapes[s],
// output_grads[s]). Touches each gradient array once per layer instead of
// once per sample; the hot path for mini-batch updates.
void backward_batch_accumulate(const DenseNet& net, std::span<const Tape> tapes,
                               const std::vector<std::vector<double>>& output_grads,
                               std::span<const double> scales, Gradient& into);

struct OptimizerState {
    enum class Kind { sgd, adam };

    Kind kind = Kind::sgd;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t timestep = 0;                // adam steps taken so far
    std::vector<std::vector<double>> m_slots;  // adam first moments, one slot per array
    std::vector<std::vector<double>> v_slots;  // adam second moments

    static OptimizerState sgd(double lr);
    static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                               double eps = 1e-8);
};

// One optimizer step over all net parameters. Non-finite gradients are
// rejected before any parameter is touched.
void apply_update(DenseNet& net, const Gradient& grad, OptimizerState& opt);

// Flat-array variant for parameter blocks that are not a DenseNet.
void apply_update(std::vector<double>& params, std::span<const double> grad,
                  OptimizerState& opt);

// Scalar loss on the network output with its analytic gradient, for
// gradient checking.
struct ScalarLoss {
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> grad;
};

// Max over all parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12),
// numeric side by central differences.
double grad_check(const DenseNet& net, const ScalarLoss& loss, std::span<const double> input,
                  double h = 1e-5);

}  // namespace dsrl::nn
