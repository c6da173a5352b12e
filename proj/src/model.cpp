#include "svd/model.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "svd/errors.hpp"

namespace svd {

namespace {

constexpr uint32_t kCheckpointVersion = 1;

// Builds parameter structures; when an RNG is supplied, conv/linear weights get
// fan-in-scaled uniform values, otherwise they stay zero. Norm gains are 1.
struct Builder {
    std::mt19937_64* rng = nullptr;

    void fill_uniform(std::vector<float>& v, int fan_in) {
        if (!rng) return;
        const double bound = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& f : v) f = float(dist(*rng));
    }

    ConvParams conv(KernelShape k, Stride3 s, int cin, int cout) {
        ConvParams p;
        p.kernel = k;
        p.stride = s;
        p.in_channels = cin;
        p.out_channels = cout;
        p.weights.assign(size_t(k.volume()), std::vector<float>(size_t(cin) * size_t(cout), 0.0f));
        const int fan_in = cin * k.volume();
        for (auto& w : p.weights) fill_uniform(w, fan_in);
        p.bias.assign(size_t(cout), 0.0f);
        return p;
    }

    LinearParams linear(int in, int out) {
        LinearParams p;
        p.in_dim = in;
        p.out_dim = out;
        p.weight.assign(size_t(in) * size_t(out), 0.0f);
        fill_uniform(p.weight, in);
        p.bias.assign(size_t(out), 0.0f);
        return p;
    }

    LayerNormParams ln(int c) {
        return {std::vector<float>(size_t(c), 1.0f), std::vector<float>(size_t(c), 0.0f)};
    }

    GroupNormParams gn(int c, int groups) {
        return {groups, std::vector<float>(size_t(c), 1.0f), std::vector<float>(size_t(c), 0.0f)};
    }

    SEParams se(int c, int r) {
        SEParams p;
        p.channels = c;
        p.reduction = r;
        const int h = c / r;
        p.w1.assign(size_t(h) * size_t(c), 0.0f);
        fill_uniform(p.w1, c);
        p.b1.assign(size_t(h), 0.0f);
        p.w2.assign(size_t(c) * size_t(h), 0.0f);
        fill_uniform(p.w2, h);
        p.b2.assign(size_t(c), 0.0f);
        return p;
    }
};

ModelParams build_params(const ModelConfig& config, Builder& b) {
    const auto& bc = config.backbone;
    if (bc.block_depths.size() != bc.channel_schedule.size() ||
        bc.block_depths.size() != bc.stage_strides.size())
        throw ConfigError("backbone schedule lists must have equal length");

    ModelParams m;
    m.config = config;
    m.backbone.stem = b.conv({3, 3, 3}, bc.stem_stride, bc.in_channels, bc.base_channels);
    m.backbone.stem_ln = b.ln(bc.base_channels);

    int in_ch = bc.base_channels;
    for (size_t s = 0; s < bc.block_depths.size(); ++s) {
        StageParams stage;
        const int out_ch = bc.channel_schedule[s];
        const Stride3 stride = bc.stage_strides[s];
        for (int d = 0; d < bc.block_depths[s]; ++d) {
            ResidualBlockParams blk;
            const bool boundary = d == 0 && (!(stride == Stride3{1, 1, 1}) || in_ch != out_ch);
            if (boundary) {
                blk.conv1 = b.conv({3, 3, 3}, stride, in_ch, out_ch);
                blk.has_shortcut = true;
                blk.shortcut = b.conv({1, 1, 1}, stride, in_ch, out_ch);
            } else {
                blk.conv1 = b.conv({3, 3, 3}, {1, 1, 1}, out_ch, out_ch);
            }
            blk.ln1 = b.ln(out_ch);
            blk.conv2 = b.conv({3, 3, 3}, {1, 1, 1}, out_ch, out_ch);
            blk.ln2 = b.ln(out_ch);
            stage.blocks.push_back(std::move(blk));
        }
        const int stage_index = int(s) + 1;
        for (int se_at : bc.se_stages) {
            if (se_at == stage_index) {
                stage.has_se = true;
                stage.se = b.se(out_ch, bc.se_reduction);
            }
        }
        m.backbone.stages.push_back(std::move(stage));
        in_ch = out_ch;
    }

    const int d = config.fpn.common_dim;
    const size_t n_stages = bc.channel_schedule.size();
    for (size_t lvl = n_stages - 3; lvl < n_stages; ++lvl) {
        m.fpn.lateral.push_back(b.conv({1, 1, 1}, {1, 1, 1}, bc.channel_schedule[lvl], d));
        m.fpn.lateral_ln.push_back(b.ln(d));
    }
    for (int u = 0; u < 2; ++u)
        m.fpn.upsample.push_back(b.conv({1, 3, 3}, {1, 2, 2}, d, d));
    m.fpn.refine = b.conv({1, 3, 3}, {1, 1, 1}, d, d);

    const auto& hc = config.head;
    if (hc.hidden_dim % hc.groupnorm_groups != 0)
        throw ConfigError("head hidden dim must be divisible by the group-norm group count");
    m.head.trunk1 = b.linear(hc.in_dim, hc.hidden_dim);
    m.head.gn1 = b.gn(hc.hidden_dim, hc.groupnorm_groups);
    m.head.trunk2 = b.linear(hc.hidden_dim, hc.hidden_dim);
    m.head.gn2 = b.gn(hc.hidden_dim, hc.groupnorm_groups);
    m.head.cls = b.linear(hc.hidden_dim, 1);
    m.head.box = b.linear(hc.hidden_dim, 4);
    m.head.ctr = b.linear(hc.hidden_dim, 1);
    m.head.cls.bias[0] = float(-std::log((1.0 - hc.cls_prior) / hc.cls_prior));
    return m;
}

using VisitFn =
    std::function<void(const std::string&, const std::vector<uint32_t>&, std::vector<float>&)>;

void visit_conv(const std::string& name, ConvParams& c, const VisitFn& fn) {
    std::vector<float> flat;
    flat.reserve(size_t(c.kernel.volume()) * size_t(c.in_channels) * size_t(c.out_channels));
    for (const auto& w : c.weights) flat.insert(flat.end(), w.begin(), w.end());
    fn(name + ".weight",
       {uint32_t(c.kernel.volume()), uint32_t(c.in_channels), uint32_t(c.out_channels)}, flat);
    size_t pos = 0;
    for (auto& w : c.weights) {
        std::copy(flat.begin() + long(pos), flat.begin() + long(pos + w.size()), w.begin());
        pos += w.size();
    }
    fn(name + ".bias", {uint32_t(c.out_channels)}, c.bias);
}

void visit_ln(const std::string& name, LayerNormParams& l, const VisitFn& fn) {
    fn(name + ".gain", {uint32_t(l.gain.size())}, l.gain);
    fn(name + ".bias", {uint32_t(l.bias.size())}, l.bias);
}

void visit_gn(const std::string& name, GroupNormParams& g, const VisitFn& fn) {
    fn(name + ".gain", {uint32_t(g.gain.size())}, g.gain);
    fn(name + ".bias", {uint32_t(g.bias.size())}, g.bias);
}

void visit_linear(const std::string& name, LinearParams& l, const VisitFn& fn) {
    fn(name + ".weight", {uint32_t(l.in_dim), uint32_t(l.out_dim)}, l.weight);
    fn(name + ".bias", {uint32_t(l.out_dim)}, l.bias);
}

void visit_se(const std::string& name, SEParams& s, const VisitFn& fn) {
    fn(name + ".w1", {uint32_t(s.hidden()), uint32_t(s.channels)}, s.w1);
    fn(name + ".b1", {uint32_t(s.hidden())}, s.b1);
    fn(name + ".w2", {uint32_t(s.channels), uint32_t(s.hidden())}, s.w2);
    fn(name + ".b2", {uint32_t(s.channels)}, s.b2);
}

SparseTensor3D apply_ln(const SparseTensor3D& x, const LayerNormParams& ln) {
    return sparse_layernorm(x, ln.gain, ln.bias);
}

SparseTensor3D block_forward(const SparseTensor3D& x, const ResidualBlockParams& blk) {
    SparseTensor3D main = blk.has_shortcut || !(blk.conv1.stride == Stride3{1, 1, 1})
                              ? strided_conv3d(x, blk.conv1)
                              : subm_conv3d(x, blk.conv1);
    main = sparse_relu(apply_ln(main, blk.ln1));
    main = apply_ln(subm_conv3d(main, blk.conv2), blk.ln2);
    SparseTensor3D shortcut = blk.has_shortcut ? strided_conv3d(x, blk.shortcut) : x;
    return sparse_relu(sparse_add_union(main, shortcut));
}

} // namespace

ModelParams init_weights(const ModelConfig& config, uint64_t seed) {
    std::mt19937_64 rng(seed);
    Builder b{&rng};
    return build_params(config, b);
}

BackboneOutputs backbone_forward(const SparseTensor3D& x, const BackboneParams& params) {
    if (x.channels() != params.stem.in_channels)
        throw ShapeError("backbone input channels do not match stem parameters");
    SparseTensor3D y = sparse_relu(apply_ln(strided_conv3d(x, params.stem), params.stem_ln));
    std::vector<SparseTensor3D> stage_outs;
    for (const auto& stage : params.stages) {
        for (const auto& blk : stage.blocks) y = block_forward(y, blk);
        if (stage.has_se) y = squeeze_excitation(y, stage.se);
        stage_outs.push_back(y);
    }
    const size_t n = stage_outs.size();
    if (n < 3) throw ConfigError("backbone needs at least three stages");
    return {stage_outs[n - 3], stage_outs[n - 2], stage_outs[n - 1]};
}

SparseTensor3D fpn_forward(const BackboneOutputs& feats, const FPNParams& params) {
    if (params.lateral.size() != 3 || params.lateral_ln.size() != 3 ||
        params.upsample.size() != 2)
        throw ConfigError("feature pyramid expects three laterals and two upsample stages");
    auto lat = [&](const SparseTensor3D& t, size_t i) {
        return apply_ln(subm_conv3d(t, params.lateral[i]), params.lateral_ln[i]);
    };
    SparseTensor3D p2 = lat(feats.c2, 0);
    SparseTensor3D p3 = lat(feats.c3, 1);
    SparseTensor3D p4 = lat(feats.c4, 2);
    SparseTensor3D p3f =
        sparse_add_union(p3, transpose_conv3d(p4, params.upsample[0], p3.shape()));
    SparseTensor3D p2f =
        sparse_add_union(p2, transpose_conv3d(p3f, params.upsample[1], p2.shape()));
    return subm_conv3d(p2f, params.refine);
}

std::vector<float> linear_forward(const LinearParams& p, const std::vector<float>& in,
                                  int64_t rows) {
    if (in.size() != size_t(rows) * size_t(p.in_dim))
        throw ShapeError("linear input size does not match in_dim");
    std::vector<float> out(size_t(rows) * size_t(p.out_dim));
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = in.data() + r * p.in_dim;
        for (int o = 0; o < p.out_dim; ++o) {
            double acc = p.bias[size_t(o)];
            for (int i = 0; i < p.in_dim; ++i)
                acc += double(src[i]) * double(p.weight[size_t(i) * size_t(p.out_dim) + size_t(o)]);
            out[size_t(r) * size_t(p.out_dim) + size_t(o)] = float(acc);
        }
    }
    return out;
}

std::vector<float> groupnorm_forward(const GroupNormParams& p, const std::vector<float>& in,
                                     int64_t rows, float eps) {
    const int c = int(p.gain.size());
    if (c % p.groups != 0) throw ConfigError("channels not divisible by group count");
    if (in.size() != size_t(rows) * size_t(c))
        throw ShapeError("group-norm input size does not match channel count");
    const int gs = c / p.groups;
    std::vector<float> out(in.size());
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = in.data() + r * c;
        for (int g = 0; g < p.groups; ++g) {
            double mean = 0;
            for (int i = 0; i < gs; ++i) mean += src[g * gs + i];
            mean /= gs;
            double var = 0;
            for (int i = 0; i < gs; ++i) {
                const double d = src[g * gs + i] - mean;
                var += d * d;
            }
            var /= gs;
            const double inv = 1.0 / std::sqrt(var + double(eps));
            for (int i = 0; i < gs; ++i) {
                const int ch = g * gs + i;
                out[size_t(r) * size_t(c) + size_t(ch)] =
                    float((src[ch] - mean) * inv) * p.gain[size_t(ch)] + p.bias[size_t(ch)];
            }
        }
    }
    return out;
}

HeadOutputs head_forward(const SparseTensor3D& squeezed, const HeadParams& params,
                         const HeadConfig& config, HeadTrace* trace) {
    if (squeezed.shape().t != 1)
        throw ShapeError("detection head expects a temporally squeezed input (T=1)");
    if (squeezed.channels() != config.in_dim)
        throw ShapeError("detection head input channels do not match configuration");
    const int64_t m = squeezed.size();

    std::vector<float> input(squeezed.features());
    auto relu = [](std::vector<float> v) {
        for (auto& f : v) f = std::max(0.0f, f);
        return v;
    };
    std::vector<float> lin1 = linear_forward(params.trunk1, input, m);
    std::vector<float> norm1 = groupnorm_forward(params.gn1, lin1, m);
    std::vector<float> act1 = relu(norm1);
    std::vector<float> lin2 = linear_forward(params.trunk2, act1, m);
    std::vector<float> norm2 = groupnorm_forward(params.gn2, lin2, m);
    std::vector<float> act2 = relu(norm2);

    HeadOutputs out;
    out.positions.reserve(size_t(m));
    for (const auto& c : squeezed.coords()) out.positions.push_back({c.batch, c.y, c.x});
    out.cls_logit = linear_forward(params.cls, act2, m);
    out.box_raw = linear_forward(params.box, act2, m);
    out.ctr_logit = linear_forward(params.ctr, act2, m);

    if (trace) {
        trace->input = std::move(input);
        trace->lin1 = std::move(lin1);
        trace->norm1 = std::move(norm1);
        trace->act1 = std::move(act1);
        trace->lin2 = std::move(lin2);
        trace->norm2 = std::move(norm2);
        trace->act2 = std::move(act2);
    }
    return out;
}

HeadOutputs full_forward(const SparseTensor3D& x, const ModelParams& params, StageTrace* trace) {
    auto note = [&](const char* name, const SparseTensor3D& t) {
        if (trace) trace->active_counts.emplace_back(name, t.size());
    };
    note("input", x);
    BackboneOutputs feats = backbone_forward(x, params.backbone);
    note("c2", feats.c2);
    note("c3", feats.c3);
    note("c4", feats.c4);
    SparseTensor3D fused = fpn_forward(feats, params.fpn);
    note("fpn", fused);
    SparseTensor3D squeezed = temporal_max_squeeze(fused);
    note("squeezed", squeezed);
    return head_forward(squeezed, params.head, params.config.head);
}

void visit_params(ModelParams& params, const VisitFn& fn) {
    visit_conv("backbone.stem", params.backbone.stem, fn);
    visit_ln("backbone.stem_ln", params.backbone.stem_ln, fn);
    for (size_t s = 0; s < params.backbone.stages.size(); ++s) {
        auto& stage = params.backbone.stages[s];
        const std::string sp = "backbone.stage" + std::to_string(s + 1);
        for (size_t d = 0; d < stage.blocks.size(); ++d) {
            auto& blk = stage.blocks[d];
            const std::string bp = sp + ".block" + std::to_string(d);
            visit_conv(bp + ".conv1", blk.conv1, fn);
            visit_ln(bp + ".ln1", blk.ln1, fn);
            visit_conv(bp + ".conv2", blk.conv2, fn);
            visit_ln(bp + ".ln2", blk.ln2, fn);
            if (blk.has_shortcut) visit_conv(bp + ".shortcut", blk.shortcut, fn);
        }
        if (stage.has_se) visit_se(sp + ".se", stage.se, fn);
    }
    for (size_t i = 0; i < params.fpn.lateral.size(); ++i) {
        const std::string lp = "fpn.lateral" + std::to_string(i + 2);
        visit_conv(lp, params.fpn.lateral[i], fn);
        visit_ln(lp + "_ln", params.fpn.lateral_ln[i], fn);
    }
    for (size_t i = 0; i < params.fpn.upsample.size(); ++i)
        visit_conv("fpn.upsample" + std::to_string(i), params.fpn.upsample[i], fn);
    visit_conv("fpn.refine", params.fpn.refine, fn);
    visit_linear("head.trunk1", params.head.trunk1, fn);
    visit_gn("head.gn1", params.head.gn1, fn);
    visit_linear("head.trunk2", params.head.trunk2, fn);
    visit_gn("head.gn2", params.head.gn2, fn);
    visit_linear("head.cls", params.head.cls, fn);
    visit_linear("head.box", params.head.box, fn);
    visit_linear("head.ctr", params.head.ctr, fn);
}

ParameterCensus parameter_census(const ModelConfig& config) {
    Builder b;
    ModelParams m = build_params(config, b);
    ParameterCensus census;
    visit_params(m, [&](const std::string& name, const std::vector<uint32_t>&,
                        std::vector<float>& data) {
        if (name.rfind("backbone.", 0) == 0)
            census.backbone += int64_t(data.size());
        else if (name.rfind("fpn.", 0) == 0)
            census.fpn += int64_t(data.size());
        else
            census.head += int64_t(data.size());
    });
    return census;
}

namespace {

void append_bytes(std::vector<char>& buf, const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
}

template <typename T>
void append_value(std::vector<char>& buf, T v) {
    append_bytes(buf, &v, sizeof(T));
}

void append_tensor(std::vector<char>& buf, const std::string& name,
                   const std::vector<uint32_t>& dims, const std::vector<float>& data) {
    append_value<uint16_t>(buf, uint16_t(name.size()));
    append_bytes(buf, name.data(), name.size());
    append_value<uint8_t>(buf, uint8_t(dims.size()));
    for (uint32_t d : dims) append_value<uint32_t>(buf, d);
    append_bytes(buf, data.data(), data.size() * sizeof(float));
}

// The model configuration rides along as plain numeric tensors so a checkpoint
// is self-describing.
void config_tensors(const ModelConfig& c,
                    const std::function<void(const std::string&, std::vector<uint32_t>,
                                             std::vector<float>)>& fn) {
    const auto& bc = c.backbone;
    fn("config.meta", {10},
       {float(bc.in_channels), float(bc.base_channels), float(bc.block_depths.size()),
        float(bc.se_reduction), float(c.fpn.common_dim), float(c.head.in_dim),
        float(c.head.hidden_dim), float(c.head.groupnorm_groups), float(c.head.cls_prior),
        float(c.head.stride)});
    std::vector<float> depths(bc.block_depths.begin(), bc.block_depths.end());
    fn("config.depths", {uint32_t(depths.size())}, depths);
    std::vector<float> channels(bc.channel_schedule.begin(), bc.channel_schedule.end());
    fn("config.channels", {uint32_t(channels.size())}, channels);
    std::vector<float> strides{float(bc.stem_stride.st), float(bc.stem_stride.sy),
                               float(bc.stem_stride.sx)};
    for (const auto& s : bc.stage_strides) {
        strides.push_back(float(s.st));
        strides.push_back(float(s.sy));
        strides.push_back(float(s.sx));
    }
    fn("config.strides", {uint32_t(strides.size() / 3), 3}, strides);
    std::vector<float> se(bc.se_stages.begin(), bc.se_stages.end());
    fn("config.se_stages", {uint32_t(se.size())}, se);
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    uint32_t count = 0;
    config_tensors(params.config,
                   [&](const std::string&, std::vector<uint32_t>, std::vector<float>) { count++; });
    ModelParams copy = params;
    visit_params(copy, [&](const std::string&, const std::vector<uint32_t>&,
                           std::vector<float>&) { count++; });

    std::vector<char> payload;
    append_value<uint32_t>(payload, kCheckpointVersion);
    append_value<uint32_t>(payload, count);
    config_tensors(params.config,
                   [&](const std::string& name, std::vector<uint32_t> dims,
                       std::vector<float> data) { append_tensor(payload, name, dims, data); });
    visit_params(copy,
                 [&](const std::string& name, const std::vector<uint32_t>& dims,
                     std::vector<float>& data) { append_tensor(payload, name, dims, data); });

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint: " + path);
    out.write("SVWT", 4);
    out.write(payload.data(), std::streamsize(payload.size()));
    const uint32_t crc =
        uint32_t(crc32(0, reinterpret_cast<const Bytef*>(payload.data()), uInt(payload.size())));
    out.write(reinterpret_cast<const char*>(&crc), 4);
    if (!out) throw ParseError("write failure on checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 4 || std::memcmp(data.data(), "SVWT", 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "bad checkpoint magic in " + path);
    if (data.size() < 16)
        throw FormatError(FormatError::Kind::Truncated, "checkpoint truncated in " + path);
    const std::vector<char> payload(data.begin() + 4, data.end() - 4);
    uint32_t stored_crc;
    std::memcpy(&stored_crc, data.data() + data.size() - 4, 4);
    const uint32_t crc =
        uint32_t(crc32(0, reinterpret_cast<const Bytef*>(payload.data()), uInt(payload.size())));
    if (stored_crc != crc)
        throw FormatError(FormatError::Kind::ChecksumMismatch,
                          "checkpoint checksum mismatch in " + path);

    size_t pos = 0;
    auto read_raw = [&](void* dst, size_t n) {
        if (pos + n > payload.size())
            throw FormatError(FormatError::Kind::Truncated, "checkpoint truncated in " + path);
        std::memcpy(dst, payload.data() + pos, n);
        pos += n;
    };
    uint32_t version, count;
    read_raw(&version, 4);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    read_raw(&count, 4);

    struct Entry {
        std::vector<uint32_t> dims;
        std::vector<float> data;
    };
    std::map<std::string, Entry> table;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len;
        read_raw(&name_len, 2);
        std::string name(name_len, '\0');
        read_raw(name.data(), name_len);
        uint8_t rank;
        read_raw(&rank, 1);
        Entry e;
        size_t n = 1;
        for (int r = 0; r < rank; ++r) {
            uint32_t d;
            read_raw(&d, 4);
            e.dims.push_back(d);
            n *= d;
        }
        e.data.resize(n);
        read_raw(e.data.data(), n * sizeof(float));
        if (!table.emplace(std::move(name), std::move(e)).second)
            throw CheckpointError("duplicate checkpoint tensor");
    }
    if (pos != payload.size())
        throw FormatError(FormatError::Kind::Malformed, "trailing bytes in checkpoint " + path);

    auto take = [&](const std::string& name) {
        auto it = table.find(name);
        if (it == table.end()) throw CheckpointError("missing checkpoint tensor: " + name);
        Entry e = std::move(it->second);
        table.erase(it);
        return e;
    };

    ModelConfig config;
    const Entry meta = take("config.meta");
    if (meta.data.size() != 10) throw CheckpointError("bad checkpoint tensor: config.meta");
    config.backbone.in_channels = int(meta.data[0]);
    config.backbone.base_channels = int(meta.data[1]);
    const int n_stages = int(meta.data[2]);
    config.backbone.se_reduction = int(meta.data[3]);
    config.fpn.common_dim = int(meta.data[4]);
    config.head.in_dim = int(meta.data[5]);
    config.head.hidden_dim = int(meta.data[6]);
    config.head.groupnorm_groups = int(meta.data[7]);
    config.head.cls_prior = meta.data[8];
    config.head.stride = int(meta.data[9]);

    const Entry depths = take("config.depths");
    const Entry channels = take("config.channels");
    const Entry strides = take("config.strides");
    const Entry se = take("config.se_stages");
    if (int(depths.data.size()) != n_stages || int(channels.data.size()) != n_stages ||
        strides.data.size() != size_t(n_stages + 1) * 3)
        throw CheckpointError("bad checkpoint tensor: config schedule");
    config.backbone.block_depths.assign(depths.data.begin(), depths.data.end());
    config.backbone.channel_schedule.assign(channels.data.begin(), channels.data.end());
    config.backbone.stem_stride = {int(strides.data[0]), int(strides.data[1]),
                                   int(strides.data[2])};
    config.backbone.stage_strides.clear();
    for (int s = 0; s < n_stages; ++s)
        config.backbone.stage_strides.push_back({int(strides.data[size_t(3 * (s + 1))]),
                                                 int(strides.data[size_t(3 * (s + 1) + 1)]),
                                                 int(strides.data[size_t(3 * (s + 1) + 2)])});
    config.backbone.se_stages.assign(se.data.begin(), se.data.end());

    Builder b;
    ModelParams m = build_params(config, b);
    visit_params(m, [&](const std::string& name, const std::vector<uint32_t>& dims,
                        std::vector<float>& dst) {
        Entry e = take(name);
        if (e.dims != dims || e.data.size() != dst.size())
            throw CheckpointError("shape mismatch for checkpoint tensor: " + name);
        dst = std::move(e.data);
    });
    if (!table.empty())
        throw CheckpointError("unexpected checkpoint tensor: " + table.begin()->first);
    return m;
}

} // namespace svd
