#pragma once

#include <memory>
#include <string>
#include <vector>

#include "igc/arch.hpp"
#include "igc/data.hpp"
#include "igc/igc_block.hpp"
#include "igc/kernels.hpp"

// Network assembly and training. Layers cache what their backward pass needs;
// parameters are exposed as named slots so the optimizer and the checkpoint
// writer share one view. Gradient accumulation order is fixed, so training
// with a fixed seed is bit-reproducible.

namespace igc {

template <typename T>
struct ParamSlot {
    std::string name;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;
    bool weight_decay = false; // conv/FC weights only, not BN affine or biases
    std::vector<int> shape;
};

template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, BnMode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) { (void)out; (void)prefix; }
};

namespace detail {

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void init_gaussian(std::vector<T>& v, double stddev, CounterRng& rng) {
    for (auto& x : v) x = static_cast<T>(rng.next_gaussian() * stddev);
}

} // namespace detail

template <typename T>
class ConvLayer : public Layer<T> {
  public:
    ConvLayer(int c_out, int c_in, int k, int stride, CounterRng& rng)
        : kernel_(c_out, c_in, k, k), grad_(kernel_.size(), T(0)), stride_(stride),
          pad_(same_pad(k)) {
        detail::init_gaussian(kernel_.vec(), std::sqrt(2.0 / (c_in * k * k)), rng);
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        input_ = x;
        return conv2d_forward(x, kernel_, stride_, pad_);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        ConvGrads<T> g = conv2d_backward(input_, kernel_, grad_out, stride_, pad_);
        detail::accumulate(grad_, g.grad_kernel.vec());
        return std::move(g.grad_input);
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".kernel", &kernel_.vec(), &grad_, true,
                       {kernel_.n(), kernel_.c(), kernel_.h(), kernel_.w()}});
    }

  private:
    Tensor<T> kernel_;
    std::vector<T> grad_;
    int stride_, pad_;
    Tensor<T> input_;
};

template <typename T>
class BnLayer : public Layer<T> {
  public:
    explicit BnLayer(int channels) : bn_(channels), grad_gamma_(channels, T(0)),
                                     grad_beta_(channels, T(0)) {}

    Tensor<T> forward(const Tensor<T>& x, BnMode mode) override {
        return batchnorm_forward(x, bn_.gamma, bn_.beta, bn_.state, mode,
                                 mode == BnMode::train ? &cache_ : nullptr);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        BnGrads<T> g = batchnorm_backward(grad_out, cache_, bn_.gamma);
        detail::accumulate(grad_gamma_, g.grad_gamma);
        detail::accumulate(grad_beta_, g.grad_beta);
        return std::move(g.grad_input);
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        const int c = static_cast<int>(bn_.gamma.size());
        out.push_back({prefix + ".gamma", &bn_.gamma, &grad_gamma_, false, {c}});
        out.push_back({prefix + ".beta", &bn_.beta, &grad_beta_, false, {c}});
        out.push_back({prefix + ".running_mean", &bn_.state.running_mean, nullptr, false, {c}});
        out.push_back({prefix + ".running_var", &bn_.state.running_var, nullptr, false, {c}});
    }

  private:
    BnParams<T> bn_;
    std::vector<T> grad_gamma_, grad_beta_;
    BnCache<T> cache_;
};

template <typename T>
class ReluLayer : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        input_ = x;
        return relu_forward(x);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        return relu_backward(grad_out, input_);
    }

  private:
    Tensor<T> input_;
};

// Core IGC block (no BN/ReLU; the net composes those explicitly so residual
// units can defer the last ReLU past the addition).
template <typename T>
class IgcLayer : public Layer<T> {
  public:
    IgcLayer(const IgcConfig& cfg, CounterRng& rng) : cfg_(cfg) {
        cfg_.with_bn_relu = false;
        params_ = make_igc_params<T>(cfg_, rng);
        for (const auto& kern : params_.primary)
            grad_primary_.emplace_back(kern.size(), T(0));
        for (const auto& w : params_.secondary)
            grad_secondary_.emplace_back(w.vec().size(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode mode) override {
        return igc_block_forward(x, cfg_, params_, mode, &cache_);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        IgcBlockGrads<T> g = igc_block_backward_cached(cfg_, params_, cache_, grad_out);
        for (int l = 0; l < cfg_.l; ++l)
            detail::accumulate(grad_primary_[l], g.grad_primary[l].vec());
        for (int m = 0; m < cfg_.m; ++m)
            detail::accumulate(grad_secondary_[m], g.grad_secondary[m].vec());
        return std::move(g.grad_input);
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        for (int l = 0; l < cfg_.l; ++l)
            out.push_back({prefix + ".primary" + std::to_string(l), &params_.primary[l].vec(),
                           &grad_primary_[l], true,
                           {cfg_.m, cfg_.input_m(), cfg_.k, cfg_.k}});
        for (int m = 0; m < cfg_.m; ++m)
            out.push_back({prefix + ".secondary" + std::to_string(m), &params_.secondary[m].vec(),
                           &grad_secondary_[m], true, {cfg_.l, cfg_.l}});
    }

  private:
    IgcConfig cfg_;
    IgcBlockParams<T> params_;
    std::vector<std::vector<T>> grad_primary_, grad_secondary_;
    IgcBlockCache<T> cache_;
};

// L parallel convolutions over the same input, outputs summed.
template <typename T>
class SumFusionLayer : public Layer<T> {
  public:
    SumFusionLayer(int branches, int c_out, int c_in, int k, int stride, CounterRng& rng)
        : stride_(stride), pad_(same_pad(k)) {
        for (int b = 0; b < branches; ++b) {
            Tensor<T> kern(c_out, c_in, k, k);
            detail::init_gaussian(kern.vec(), std::sqrt(2.0 / (c_in * k * k)), rng);
            grads_.emplace_back(kern.size(), T(0));
            kernels_.push_back(std::move(kern));
        }
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        input_ = x;
        Tensor<T> out = conv2d_forward(x, kernels_[0], stride_, pad_);
        for (size_t b = 1; b < kernels_.size(); ++b) {
            const Tensor<T> y = conv2d_forward(x, kernels_[b], stride_, pad_);
            for (size_t i = 0; i < out.size(); ++i) out.vec()[i] += y.vec()[i];
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> grad_in(input_.n(), input_.c(), input_.h(), input_.w());
        for (size_t b = 0; b < kernels_.size(); ++b) {
            ConvGrads<T> g = conv2d_backward(input_, kernels_[b], grad_out, stride_, pad_);
            detail::accumulate(grads_[b], g.grad_kernel.vec());
            for (size_t i = 0; i < grad_in.size(); ++i) grad_in.vec()[i] += g.grad_input.vec()[i];
        }
        return grad_in;
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        for (size_t b = 0; b < kernels_.size(); ++b)
            out.push_back({prefix + ".branch" + std::to_string(b), &kernels_[b].vec(), &grads_[b],
                           true,
                           {kernels_[b].n(), kernels_[b].c(), kernels_[b].h(), kernels_[b].w()}});
    }

  private:
    std::vector<Tensor<T>> kernels_;
    std::vector<std::vector<T>> grads_;
    int stride_, pad_;
    Tensor<T> input_;
};

// Group convolution followed by a full 1x1 convolution (GPC).
template <typename T>
class GpcLayer : public Layer<T> {
  public:
    GpcLayer(const IgcConfig& cfg, CounterRng& rng) : cfg_(cfg) {
        cfg_.with_bn_relu = false;
        params_ = make_gpc_params<T>(cfg_, rng);
        for (const auto& kern : params_.primary) grad_primary_.emplace_back(kern.size(), T(0));
        grad_point_.assign(params_.pointwise.size(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        input_ = x;
        const int pad = same_pad(cfg_.k);
        const ConvGeom g = conv_output_geom(x.h(), x.w(), cfg_.k, cfg_.stride, pad);
        mid_ = Tensor<T>(x.n(), cfg_.width(), g.h_out, g.w_out);
        for (int l = 0; l < cfg_.l; ++l) {
            const Tensor<T> part = slice_channels(x, l * cfg_.input_m(), (l + 1) * cfg_.input_m());
            paste_channels(mid_, conv2d_forward(part, params_.primary[l], cfg_.stride, pad),
                           l * cfg_.m);
        }
        return conv2d_forward(mid_, params_.pointwise, 1, 0);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const int pad = same_pad(cfg_.k);
        ConvGrads<T> gp = conv2d_backward(mid_, params_.pointwise, grad_out, 1, 0);
        detail::accumulate(grad_point_, gp.grad_kernel.vec());
        Tensor<T> grad_in(input_.n(), input_.c(), input_.h(), input_.w());
        for (int l = 0; l < cfg_.l; ++l) {
            const Tensor<T> part =
                slice_channels(input_, l * cfg_.input_m(), (l + 1) * cfg_.input_m());
            const Tensor<T> part_g = slice_channels(gp.grad_input, l * cfg_.m, (l + 1) * cfg_.m);
            ConvGrads<T> g = conv2d_backward(part, params_.primary[l], part_g, cfg_.stride, pad);
            detail::accumulate(grad_primary_[l], g.grad_kernel.vec());
            paste_channels(grad_in, g.grad_input, l * cfg_.input_m());
        }
        return grad_in;
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        for (int l = 0; l < cfg_.l; ++l)
            out.push_back({prefix + ".group" + std::to_string(l), &params_.primary[l].vec(),
                           &grad_primary_[l], true, {cfg_.m, cfg_.input_m(), cfg_.k, cfg_.k}});
        out.push_back({prefix + ".pointwise", &params_.pointwise.vec(), &grad_point_, true,
                       {cfg_.width(), cfg_.width(), 1, 1}});
    }

  private:
    IgcConfig cfg_;
    GpcParams<T> params_;
    std::vector<std::vector<T>> grad_primary_;
    std::vector<T> grad_point_;
    Tensor<T> input_, mid_;
};

template <typename T>
class GlobalAvgPoolLayer : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        h_ = x.h();
        w_ = x.w();
        return global_avg_pool_forward(x);
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        return global_avg_pool_backward(grad_out, h_, w_);
    }

  private:
    int h_ = 0, w_ = 0;
};

template <typename T>
class FcLayer : public Layer<T> {
  public:
    FcLayer(int out_dim, int in_dim, CounterRng& rng)
        : weights_(out_dim, in_dim), bias_(out_dim, T(0)),
          grad_w_(weights_.vec().size(), T(0)), grad_b_(out_dim, T(0)) {
        detail::init_gaussian(weights_.vec(), std::sqrt(2.0 / in_dim), rng);
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode) override {
        input_ = x;
        return fully_connected_forward(x, weights_, bias_);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        FcGrads<T> g = fully_connected_backward(input_, weights_, grad_out);
        detail::accumulate(grad_w_, g.grad_weights.vec());
        detail::accumulate(grad_b_, g.grad_bias);
        return std::move(g.grad_input);
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".weight", &weights_.vec(), &grad_w_, true,
                       {weights_.rows(), weights_.cols()}});
        out.push_back({prefix + ".bias", &bias_, &grad_b_, false,
                       {static_cast<int>(bias_.size())}});
    }

  private:
    Matrix<T> weights_;
    std::vector<T> bias_;
    std::vector<T> grad_w_, grad_b_;
    Tensor<T> input_;
};

template <typename T>
class Sequential : public Layer<T> {
  public:
    void add(std::unique_ptr<Layer<T>> layer, const std::string& name) {
        layers_.push_back(std::move(layer));
        names_.push_back(name);
    }

    bool empty() const { return layers_.empty(); }

    Tensor<T> forward(const Tensor<T>& x, BnMode mode) override {
        Tensor<T> cur = x;
        for (auto& l : layers_) cur = l->forward(cur, mode);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> cur = grad_out;
        for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
        return cur;
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect(out, prefix.empty() ? names_[i] : prefix + "." + names_[i]);
    }

  private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<std::string> names_;
};

// y = relu(branch(x) + shortcut(x)); shortcut empty means identity.
template <typename T>
class ResidualUnit : public Layer<T> {
  public:
    ResidualUnit(std::unique_ptr<Sequential<T>> branch, std::unique_ptr<Sequential<T>> shortcut)
        : branch_(std::move(branch)), shortcut_(std::move(shortcut)) {}

    Tensor<T> forward(const Tensor<T>& x, BnMode mode) override {
        Tensor<T> b = branch_->forward(x, mode);
        Tensor<T> s = shortcut_ ? shortcut_->forward(x, mode) : x;
        if (!b.same_shape(s))
            throw ShapeError("residual branch " + b.shape_str() + " vs shortcut " + s.shape_str());
        pre_relu_ = Tensor<T>(b.n(), b.c(), b.h(), b.w());
        for (size_t i = 0; i < b.size(); ++i) pre_relu_.vec()[i] = b.vec()[i] + s.vec()[i];
        return relu_forward(pre_relu_);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T> g = relu_backward(grad_out, pre_relu_);
        Tensor<T> gb = branch_->backward(g);
        Tensor<T> gs = shortcut_ ? shortcut_->backward(g) : g;
        for (size_t i = 0; i < gb.size(); ++i) gb.vec()[i] += gs.vec()[i];
        return gb;
    }

    void collect(std::vector<ParamSlot<T>>& out, const std::string& prefix) override {
        branch_->collect(out, prefix + ".branch");
        if (shortcut_) shortcut_->collect(out, prefix + ".shortcut");
    }

  private:
    std::unique_ptr<Sequential<T>> branch_;
    std::unique_ptr<Sequential<T>> shortcut_; // null = identity
    Tensor<T> pre_relu_;
};

template <typename T>
class Network {
  public:
    Network() : root_(std::make_unique<Sequential<T>>()) {}

    Sequential<T>& root() { return *root_; }

    Tensor<T> forward(const Tensor<T>& x, BnMode mode) { return root_->forward(x, mode); }
    Tensor<T> backward(const Tensor<T>& grad_logits) { return root_->backward(grad_logits); }

    std::vector<ParamSlot<T>> params() {
        std::vector<ParamSlot<T>> out;
        root_->collect(out, "");
        return out;
    }

    // learnable parameters only (running stats excluded)
    long long param_count() {
        long long total = 0;
        for (const auto& s : params())
            if (s.grad) total += static_cast<long long>(s.value->size());
        return total;
    }

    void zero_grads() {
        for (auto& s : params())
            if (s.grad) std::fill(s.grad->begin(), s.grad->end(), T(0));
    }

  private:
    std::unique_ptr<Sequential<T>> root_;
};

// ---------------------------------------------------------------------------
// Builder. Stem conv -> B blocks per stage (stride-2 transition at stage
// boundaries) -> global average pool -> FC. Every block is followed by
// BN+ReLU; with identity mappings each pair of blocks forms a residual unit
// whose shortcut is a projection only at stage transitions.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
std::unique_ptr<Layer<T>> make_block_core(const BlockPlan& bp, CounterRng& rng) {
    switch (bp.type) {
        case NetBlockType::igc: {
            IgcConfig cfg{bp.l, bp.m_out, 3, bp.stride, false, bp.m_in};
            return std::make_unique<IgcLayer<T>>(cfg, rng);
        }
        case NetBlockType::gpc: {
            IgcConfig cfg{bp.l, bp.m_out, 3, bp.stride, false, bp.m_in};
            return std::make_unique<GpcLayer<T>>(cfg, rng);
        }
        case NetBlockType::sumfusion:
            return std::make_unique<SumFusionLayer<T>>(bp.l, bp.c_out, bp.c_in, 3, bp.stride, rng);
        case NetBlockType::regconv:
            return std::make_unique<ConvLayer<T>>(bp.c_out, bp.c_in, 3, bp.stride, rng);
    }
    throw ConfigError("unreachable block type");
}

} // namespace detail

template <typename T>
Network<T> build_network(const ArchSpec& arch, uint64_t seed, int input_hw = 32,
                         int input_channels = 3) {
    const NetPlan plan = plan_network(arch, input_hw, arch.n_classes, input_channels);
    CounterRng rng(seed, 0x696e6974); // "init"
    Network<T> net;

    auto stem = std::make_unique<Sequential<T>>();
    stem->add(std::make_unique<ConvLayer<T>>(plan.stem_width, input_channels, 3, 1, rng), "conv");
    stem->add(std::make_unique<BnLayer<T>>(plan.stem_width), "bn");
    stem->add(std::make_unique<ReluLayer<T>>(), "relu");
    net.root().add(std::move(stem), "stem");

    for (size_t i = 0; i < plan.blocks.size(); ++i) {
        const BlockPlan& bp = plan.blocks[i];
        const std::string name = "s" + std::to_string(bp.stage) + "b" +
                                 std::to_string(bp.index_in_stage);
        if (bp.starts_unit) {
            const BlockPlan& second = plan.blocks[i + 1];
            auto branch = std::make_unique<Sequential<T>>();
            branch->add(detail::make_block_core<T>(bp, rng), "block0");
            branch->add(std::make_unique<BnLayer<T>>(bp.c_out), "bn0");
            branch->add(std::make_unique<ReluLayer<T>>(), "relu0");
            branch->add(detail::make_block_core<T>(second, rng), "block1");
            branch->add(std::make_unique<BnLayer<T>>(second.c_out), "bn1");
            std::unique_ptr<Sequential<T>> shortcut;
            if (bp.projection) {
                shortcut = std::make_unique<Sequential<T>>();
                shortcut->add(std::make_unique<ConvLayer<T>>(bp.c_out, bp.c_in, 1, bp.stride, rng),
                              "conv");
                shortcut->add(std::make_unique<BnLayer<T>>(bp.c_out), "bn");
            }
            net.root().add(std::make_unique<ResidualUnit<T>>(std::move(branch), std::move(shortcut)),
                           "s" + std::to_string(bp.stage) + "u" +
                               std::to_string(bp.index_in_stage / 2));
            ++i; // consumed the pair
        } else {
            auto seq = std::make_unique<Sequential<T>>();
            seq->add(detail::make_block_core<T>(bp, rng), "block");
            seq->add(std::make_unique<BnLayer<T>>(bp.c_out), "bn");
            seq->add(std::make_unique<ReluLayer<T>>(), "relu");
            net.root().add(std::move(seq), name);
        }
    }

    auto head = std::make_unique<Sequential<T>>();
    head->add(std::make_unique<GlobalAvgPoolLayer<T>>(), "pool");
    head->add(std::make_unique<FcLayer<T>>(arch.n_classes, plan.final_width, rng), "fc");
    net.root().add(std::move(head), "head");
    return net;
}

// ---------------------------------------------------------------------------
// SGD with Nesterov momentum. Weight decay applies to slots flagged for it.
// ---------------------------------------------------------------------------

template <typename T>
class SgdNesterov {
  public:
    explicit SgdNesterov(const std::vector<ParamSlot<T>>& slots) {
        for (const auto& s : slots)
            velocity_.emplace_back(s.grad ? s.value->size() : 0, T(0));
    }

    void step(std::vector<ParamSlot<T>>& slots, double lr, double momentum, double weight_decay) {
        for (size_t i = 0; i < slots.size(); ++i) {
            auto& s = slots[i];
            if (!s.grad) continue;
            auto& v = velocity_[i];
            for (size_t j = 0; j < v.size(); ++j) {
                T g = (*s.grad)[j];
                if (s.weight_decay) g += static_cast<T>(weight_decay) * (*s.value)[j];
                v[j] = static_cast<T>(momentum) * v[j] + g;
                (*s.value)[j] -= static_cast<T>(lr) * (g + static_cast<T>(momentum) * v[j]);
            }
        }
    }

  private:
    std::vector<std::vector<T>> velocity_;
};

// ---------------------------------------------------------------------------
// Training protocol: Nesterov SGD, lr 0.1 dropped by 10x at 0.5/0.75/0.875 of
// the run, weight decay 1e-4 on conv/FC weights.
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::array<double, 3> lr_drop_fractions{0.5, 0.75, 0.875};
    uint64_t seed = 1;
    bool augment = false;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double train_acc = 0;
    double eval_acc = -1; // -1 = no eval set
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    bool diverged = false;
    std::string diagnostic;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

TrainHistory train(Network<float>& net, const Dataset& train_set, const Dataset* eval_set,
                   const TrainConfig& cfg);

double evaluate(Network<float>& net, const Dataset& ds);

std::string history_csv(const TrainHistory& history);

// ---------------------------------------------------------------------------
// Checkpoints: "IGCCKPT1" magic, version, JSON header {arch, precision,
// tensor manifest with shapes and byte offsets}, little-endian float32 blob.
// ---------------------------------------------------------------------------

void save_checkpoint(Network<float>& net, const ArchSpec& arch, const std::string& path);

struct LoadedCheckpoint {
    ArchSpec arch;
    Network<float> net;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace igc
