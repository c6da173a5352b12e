#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svd/rulebook.hpp"
#include "svd/sparse_ops.hpp"
#include "svd/tensor.hpp"

namespace svd {

struct BackboneConfig {
    int in_channels = 6;
    int base_channels = 32;
    std::vector<int> block_depths{2, 2, 2, 1};
    std::vector<int> channel_schedule{32, 64, 128, 256};
    std::vector<Stride3> stage_strides{{1, 1, 1}, {1, 2, 2}, {1, 2, 2}, {1, 2, 2}};
    Stride3 stem_stride{1, 2, 2};
    std::vector<int> se_stages{3, 4}; // 1-based stage indices
    int se_reduction = 16;
};

struct FPNConfig {
    int common_dim = 128;
};

struct HeadConfig {
    int in_dim = 128;
    int hidden_dim = 128;
    int groupnorm_groups = 8;
    double cls_prior = 0.01;
    int stride = 4;
};

struct ModelConfig {
    BackboneConfig backbone;
    FPNConfig fpn;
    HeadConfig head;
};

struct LayerNormParams {
    std::vector<float> gain;
    std::vector<float> bias;
};

struct LinearParams {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<float> weight; // in_dim x out_dim row-major
    std::vector<float> bias;
};

struct GroupNormParams {
    int groups = 1;
    std::vector<float> gain;
    std::vector<float> bias;
};

struct ResidualBlockParams {
    ConvParams conv1; // strided at stage boundaries, submanifold otherwise
    LayerNormParams ln1;
    ConvParams conv2; // always submanifold
    LayerNormParams ln2;
    bool has_shortcut = false;
    ConvParams shortcut; // 1x1x1 strided projection when set
};

struct StageParams {
    std::vector<ResidualBlockParams> blocks;
    bool has_se = false;
    SEParams se;
};

struct BackboneParams {
    ConvParams stem;
    LayerNormParams stem_ln;
    std::vector<StageParams> stages;
};

struct FPNParams {
    // lateral[i] projects C_{i+2}; upsample[0] lifts P4 to stride 8,
    // upsample[1] lifts the fused P3' to stride 4.
    std::vector<ConvParams> lateral;
    std::vector<LayerNormParams> lateral_ln;
    std::vector<ConvParams> upsample;
    ConvParams refine; // 1x3x3 submanifold
};

struct HeadParams {
    LinearParams trunk1;
    GroupNormParams gn1;
    LinearParams trunk2;
    GroupNormParams gn2;
    LinearParams cls;
    LinearParams box;
    LinearParams ctr;
};

struct ModelParams {
    ModelConfig config;
    BackboneParams backbone;
    FPNParams fpn;
    HeadParams head;
};

struct HeadPosition {
    int32_t batch;
    int32_t y;
    int32_t x;
    bool operator==(const HeadPosition&) const = default;
};

struct HeadOutputs {
    std::vector<HeadPosition> positions; // at the head stride
    std::vector<float> cls_logit;        // M'
    std::vector<float> box_raw;          // M' x 4 (log-LTRB)
    std::vector<float> ctr_logit;        // M'
};

// Row-level activations kept for head backpropagation (demo training).
struct HeadTrace {
    std::vector<float> input;  // M' x in_dim
    std::vector<float> lin1, norm1, act1;
    std::vector<float> lin2, norm2, act2;
};

struct BackboneOutputs {
    SparseTensor3D c2, c3, c4;
};

ModelParams init_weights(const ModelConfig& config, uint64_t seed);

BackboneOutputs backbone_forward(const SparseTensor3D& x, const BackboneParams& params);
SparseTensor3D fpn_forward(const BackboneOutputs& feats, const FPNParams& params);
HeadOutputs head_forward(const SparseTensor3D& squeezed, const HeadParams& params,
                         const HeadConfig& config, HeadTrace* trace = nullptr);

struct StageTrace {
    std::vector<std::pair<std::string, int64_t>> active_counts;
};

HeadOutputs full_forward(const SparseTensor3D& x, const ModelParams& params,
                         StageTrace* trace = nullptr);

// Applies fn to every named parameter tensor in a fixed order.
void visit_params(ModelParams& params,
                  const std::function<void(const std::string&, const std::vector<uint32_t>&,
                                           std::vector<float>&)>& fn);

struct ParameterCensus {
    int64_t backbone = 0;
    int64_t fpn = 0;
    int64_t head = 0;
    int64_t total() const { return backbone + fpn + head; }
};

ParameterCensus parameter_census(const ModelConfig& config);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Pointwise helpers shared with the losses module.
std::vector<float> linear_forward(const LinearParams& p, const std::vector<float>& in,
                                  int64_t rows);
std::vector<float> groupnorm_forward(const GroupNormParams& p, const std::vector<float>& in,
                                     int64_t rows, float eps = 1e-5f);

} // namespace svd
