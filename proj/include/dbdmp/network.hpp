#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbdmp/nn.hpp"

namespace dbdmp {

enum class HeadMode { Segmentation, Reconstruction };
enum class AuxDropoutScope { Bottleneck, Skips, Both };

struct NetworkConfig {
    int in_channels = 1;
    int class_count = 2;
    int resolution_levels = 5;
    int base_features = 16;
    int max_features = 256;
    double dropout_rate = 0.5;
    HeadMode head_mode = HeadMode::Segmentation;
    AuxDropoutScope aux_dropout_scope = AuxDropoutScope::Both;
    bool dual_branch = true;

    void validate() const {
        if (resolution_levels < 2) throw std::invalid_argument("resolution_levels must be >= 2");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("dropout_rate must be in [0,1)");
        if (class_count < 2) throw std::invalid_argument("class_count must be >= 2");
        if (base_features < 1) throw std::invalid_argument("base_features must be >= 1");
    }
    int features_at(int level) const {
        return std::min<int>(max_features, base_features << level);
    }
    int head_channels() const { return head_mode == HeadMode::Segmentation ? class_count : 1; }

    bool trunk_compatible(const NetworkConfig& o, std::string* diff = nullptr) const {
        auto field = [&](const char* name, auto a, auto b) {
            if (a != b) {
                if (diff) *diff += std::string(name) + " ";
                return false;
            }
            return true;
        };
        bool ok = true;
        ok &= field("in_channels", in_channels, o.in_channels);
        ok &= field("resolution_levels", resolution_levels, o.resolution_levels);
        ok &= field("base_features", base_features, o.base_features);
        ok &= field("max_features", max_features, o.max_features);
        return ok;
    }
};

namespace nn {

template <typename T>
struct FeatureBundle {
    std::vector<TensorT<T>> skips;  // level 0 .. L-2
    TensorT<T> bottleneck;
};

// Two 3x3x3 convolutions with IN + LeakyReLU and a residual connection.
template <typename T>
struct ResBlock : Module<T> {
    Conv3d<T> c1, c2;
    InstanceNorm3d<T> n1, n2;
    LeakyReLU<T> r1, r2;
    TensorT<T> x_cache;

    ResBlock() = default;
    ResBlock(const std::string& name, int channels)
        : c1(name + ".c1", channels, channels, 3, 1, 1),
          c2(name + ".c2", channels, channels, 3, 1, 1),
          n1(name + ".n1", channels),
          n2(name + ".n2", channels) {}

    void init(Rng& rng) {
        c1.init(rng);
        c2.init(rng);
    }
    void collect(std::vector<ParamT<T>*>& out) override {
        c1.collect(out);
        n1.collect(out);
        c2.collect(out);
        n2.collect(out);
    }

    TensorT<T> forward(const TensorT<T>& x, bool train) {
        if (train) x_cache = x;
        TensorT<T> h = r1.forward(n1.forward(c1.forward(x, train), train), train);
        h = n2.forward(c2.forward(h, train), train);
        for (int64_t i = 0; i < h.numel(); ++i) h[i] += x[i];
        return r2.forward(h, train);
    }
    TensorT<T> backward(const TensorT<T>& gy) {
        TensorT<T> g = r2.backward(gy);
        TensorT<T> gb = c1.backward(n1.backward(r1.backward(c2.backward(n2.backward(g)))));
        for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];  // residual path
        return gb;
    }
};

template <typename T>
struct Encoder : Module<T> {
    NetworkConfig cfg;
    Conv3d<T> stem;
    std::vector<ResBlock<T>> blocks;            // one per level
    std::vector<Conv3d<T>> downs;               // level k-1 -> k, stride 2
    std::vector<InstanceNorm3d<T>> down_norms;
    std::vector<LeakyReLU<T>> down_relus;

    Encoder() = default;
    explicit Encoder(const NetworkConfig& c)
        : cfg(c), stem("enc.stem", c.in_channels, c.features_at(0), 3, 1, 1) {
        for (int k = 0; k < c.resolution_levels; ++k)
            blocks.emplace_back("enc.block" + std::to_string(k), c.features_at(k));
        for (int k = 1; k < c.resolution_levels; ++k) {
            downs.emplace_back("enc.down" + std::to_string(k), c.features_at(k - 1),
                               c.features_at(k), 3, 2, 1);
            down_norms.emplace_back("enc.downn" + std::to_string(k), c.features_at(k));
            down_relus.emplace_back();
        }
    }

    void init(Rng& rng) {
        stem.init(rng);
        for (auto& b : blocks) b.init(rng);
        for (auto& d : downs) d.init(rng);
    }
    void collect(std::vector<ParamT<T>*>& out) override {
        stem.collect(out);
        for (size_t k = 0; k < blocks.size(); ++k) {
            blocks[k].collect(out);
            if (k + 1 < blocks.size()) {
                downs[k].collect(out);
                down_norms[k].collect(out);
            }
        }
    }

    FeatureBundle<T> forward(const TensorT<T>& x, bool train) {
        const int64_t div = int64_t(1) << (cfg.resolution_levels - 1);
        const char* axes[3] = {"D", "H", "W"};
        for (int a = 0; a < 3; ++a)
            if (x.dim(2 + a) % div != 0)
                throw std::invalid_argument(std::string("input axis ") + axes[a] +
                                            " not divisible by 2^(levels-1)");
        FeatureBundle<T> f;
        TensorT<T> h = blocks[0].forward(stem.forward(x, train), train);
        for (int k = 1; k < cfg.resolution_levels; ++k) {
            f.skips.push_back(h);
            h = down_relus[size_t(k - 1)].forward(
                down_norms[size_t(k - 1)].forward(downs[size_t(k - 1)].forward(h, train), train),
                train);
            h = blocks[size_t(k)].forward(h, train);
        }
        f.bottleneck = std::move(h);
        return f;
    }

    // g matches the bundle layout produced by forward
    TensorT<T> backward(const FeatureBundle<T>& g) {
        TensorT<T> gh = g.bottleneck;
        for (int k = cfg.resolution_levels - 1; k >= 1; --k) {
            gh = blocks[size_t(k)].backward(gh);
            gh = downs[size_t(k - 1)].backward(
                down_norms[size_t(k - 1)].backward(down_relus[size_t(k - 1)].backward(gh)));
            for (int64_t i = 0; i < gh.numel(); ++i) gh[i] += g.skips[size_t(k - 1)][i];
        }
        return stem.backward(blocks[0].backward(gh));
    }
};

template <typename T>
struct Decoder : Module<T> {
    NetworkConfig cfg;
    std::string prefix;
    std::vector<ConvT3d<T>> ups;      // level L-1 -> L-2 ... 1 -> 0
    std::vector<ResBlock<T>> blocks;
    Conv3d<T> head;
    ChannelSoftmax<T> softmax;

    Decoder() = default;
    Decoder(const NetworkConfig& c, const std::string& name)
        : cfg(c),
          prefix(name),
          head(name + ".head", c.features_at(0), c.head_channels(), 1, 1, 0) {
        for (int k = c.resolution_levels - 1; k >= 1; --k) {
            ups.emplace_back(name + ".up" + std::to_string(k), c.features_at(k),
                             c.features_at(k - 1));
            blocks.emplace_back(name + ".block" + std::to_string(k - 1), c.features_at(k - 1));
        }
    }

    void init(Rng& rng) {
        for (auto& u : ups) u.init(rng);
        for (auto& b : blocks) b.init(rng);
        head.init(rng);
    }
    void collect(std::vector<ParamT<T>*>& out) override {
        for (size_t i = 0; i < ups.size(); ++i) {
            ups[i].collect(out);
            blocks[i].collect(out);
        }
        head.collect(out);
    }
    void collect_trunk(std::vector<ParamT<T>*>& out) {
        for (size_t i = 0; i < ups.size(); ++i) {
            ups[i].collect(out);
            blocks[i].collect(out);
        }
    }

    TensorT<T> forward(const FeatureBundle<T>& f, bool train) {
        TensorT<T> h = f.bottleneck;
        for (size_t i = 0; i < ups.size(); ++i) {
            h = ups[i].forward(h, train);
            const TensorT<T>& skip = f.skips[f.skips.size() - 1 - i];
            if (h.shape != skip.shape) throw std::invalid_argument("decoder/skip shape mismatch");
            for (int64_t j = 0; j < h.numel(); ++j) h[j] += skip[j];
            h = blocks[i].forward(h, train);
        }
        h = head.forward(h, train);
        if (cfg.head_mode == HeadMode::Segmentation) h = softmax.forward(h, train);
        return h;
    }

    FeatureBundle<T> backward(const TensorT<T>& gy) {
        TensorT<T> g = gy;
        if (cfg.head_mode == HeadMode::Segmentation) g = softmax.backward(g);
        g = head.backward(g);
        FeatureBundle<T> fg;
        fg.skips.resize(ups.size());
        for (size_t i = ups.size(); i-- > 0;) {
            g = blocks[i].backward(g);
            fg.skips[ups.size() - 1 - i] = g;  // skip grad == merged grad
            g = ups[i].backward(g);
        }
        fg.bottleneck = std::move(g);
        return fg;
    }
};

// Shared encoder, main decoder on clean features, auxiliary decoder on
// dropout-perturbed features. Single-branch baseline when dual_branch=false.
template <typename T>
struct DualBranchNet {
    NetworkConfig cfg;
    Encoder<T> encoder;
    Decoder<T> dec_main;
    Decoder<T> dec_aux;
    Dropout<T> drop_bottleneck;
    std::vector<Dropout<T>> drop_skips;

    explicit DualBranchNet(const NetworkConfig& c)
        : cfg(c), encoder(c), dec_main(c, "dec_main"), dec_aux(c, "dec_aux") {
        cfg.validate();
        drop_bottleneck.rate = c.dropout_rate;
        drop_skips.resize(size_t(c.resolution_levels - 1));
        for (auto& d : drop_skips) d.rate = c.dropout_rate;
    }

    void init(Rng& rng) {
        encoder.init(rng);
        dec_main.init(rng);
        if (cfg.dual_branch) dec_aux.init(rng);
    }

    std::vector<ParamT<T>*> params() {
        std::vector<ParamT<T>*> out;
        encoder.collect(out);
        dec_main.collect(out);
        if (cfg.dual_branch) dec_aux.collect(out);
        return out;
    }
    // everything except the two heads; transferred across stages
    std::vector<ParamT<T>*> trunk_params() {
        std::vector<ParamT<T>*> out;
        encoder.collect(out);
        dec_main.collect_trunk(out);
        if (cfg.dual_branch) dec_aux.collect_trunk(out);
        return out;
    }
    int64_t param_count() {
        int64_t n = 0;
        for (auto* p : params()) n += p->value.numel();
        return n;
    }
    void zero_grad() {
        for (auto* p : params()) p->grad.zero();
    }

    struct Outputs {
        TensorT<T> main;
        TensorT<T> aux;  // empty for single-branch nets
    };

    // Evaluation-mode forward through the main decoder only.
    TensorT<T> forward_main(const TensorT<T>& x) {
        FeatureBundle<T> f = encoder.forward(x, false);
        return dec_main.forward(f, false);
    }

    Outputs forward(const TensorT<T>& x, bool train, Rng& rng) {
        FeatureBundle<T> f = encoder.forward(x, train);
        Outputs out;
        out.main = dec_main.forward(f, train);
        if (cfg.dual_branch) {
            FeatureBundle<T> fp;
            fp.skips.resize(f.skips.size());
            const bool drop_b = cfg.aux_dropout_scope != AuxDropoutScope::Skips;
            const bool drop_s = cfg.aux_dropout_scope != AuxDropoutScope::Bottleneck;
            for (size_t i = 0; i < f.skips.size(); ++i)
                fp.skips[i] = drop_s ? drop_skips[i].forward(f.skips[i], train, rng) : f.skips[i];
            fp.bottleneck = drop_b ? drop_bottleneck.forward(f.bottleneck, train, rng)
                                   : f.bottleneck;
            out.aux = dec_aux.forward(fp, train);
        }
        return out;
    }

    // Backward through both decoders into the shared encoder; g_aux may be
    // empty for single-branch nets. Returns d/d input.
    TensorT<T> backward(const TensorT<T>& g_main, const TensorT<T>& g_aux) {
        FeatureBundle<T> fg = dec_main.backward(g_main);
        if (cfg.dual_branch && g_aux.numel() > 0) {
            FeatureBundle<T> fga = dec_aux.backward(g_aux);
            const bool drop_b = cfg.aux_dropout_scope != AuxDropoutScope::Skips;
            const bool drop_s = cfg.aux_dropout_scope != AuxDropoutScope::Bottleneck;
            for (size_t i = 0; i < fg.skips.size(); ++i) {
                TensorT<T> g = drop_s ? drop_skips[i].backward(fga.skips[i]) : fga.skips[i];
                for (int64_t j = 0; j < g.numel(); ++j) fg.skips[i][j] += g[j];
            }
            TensorT<T> gb =
                drop_b ? drop_bottleneck.backward(fga.bottleneck) : fga.bottleneck;
            for (int64_t j = 0; j < gb.numel(); ++j) fg.bottleneck[j] += gb[j];
        }
        return encoder.backward(fg);
    }
};

}  // namespace nn

using NetF = nn::DualBranchNet<float>;

}  // namespace dbdmp
