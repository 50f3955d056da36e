#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "footreg/serialize.hpp"
#include "footreg/tensor.hpp"

namespace footreg {

struct NetConfig {
  int image_size = 64;
  int base_channels = 16;
  int depth = 4;
  int in_channels_g = 4;  // R, G, B, mask
  int in_channels_r = 1;

  /// Filters at stage s: base_channels * 2^s. Stage `depth` is the latent.
  int channels_at(int stage) const { return base_channels << stage; }
  int latent_size() const { return image_size >> depth; }
  void validate() const;
};

/// 3x3 conv -> batch norm -> ReLU.
struct ConvBlock {
  Tensor weight;  // [out, in, 3, 3]
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  RunningStats stats;

  ConvBlock() = default;
  ConvBlock(int in_channels, int out_channels);
  Tensor forward(const Tensor& x, Mode mode);
};

/// 1x1 conv -> sigmoid.
struct ScoreHead {
  Tensor weight;  // [1, in, 1, 1]
  Tensor bias;

  ScoreHead() = default;
  explicit ScoreHead(int in_channels);
  Tensor forward(const Tensor& x) const;
};

/// Conv blocks each followed by 2x2 max pooling, then one conv block producing
/// the latent at the coarsest resolution.
struct Encoder {
  std::vector<ConvBlock> stages;
  ConvBlock latent;

  Encoder() = default;
  Encoder(const NetConfig& config, int in_channels);
  Tensor forward(const Tensor& x, Mode mode);
};

/// Dual of Encoder: conv block then 2x2 upsampling per stage, a full-resolution
/// conv block, and a 1-channel sigmoid head.
struct Decoder {
  std::vector<ConvBlock> stages;
  ConvBlock refine;
  ScoreHead head;

  Decoder() = default;
  explicit Decoder(const NetConfig& config);
  Tensor forward(const Tensor& latent, Mode mode);
};

/// Encoder recipe on a mask with a sigmoid patch-score head.
struct Discriminator {
  Encoder body;
  ScoreHead head;

  Discriminator() = default;
  explicit Discriminator(const NetConfig& config);
  /// Per-sample score: spatial mean of the patch score map, shape [N].
  Tensor forward(const Tensor& mask, Mode mode);
};

enum class Part { encoder_g, encoder_r, decoder, discriminator };

struct NetworkBundle {
  NetConfig config;
  Encoder encoder_g;
  Encoder encoder_r;
  Decoder decoder;
  Discriminator discriminator;

  std::vector<NamedTensor> parameters(Part part) const;
  /// E_G, E_R and F parameters in a fixed order.
  std::vector<Tensor> generator_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;
  std::size_t parameter_count() const;

  /// Parameters plus running statistics for every batch-norm layer.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
};

NetworkBundle init_parameters(const NetConfig& config, std::uint64_t seed);

/// G(x, z) = F(E_G([z, x])).
Tensor generator_forward(const Tensor& mask_x, const Tensor& image_z, NetworkBundle& bundle,
                         Mode mode);
/// R(y) = F(E_R(y)).
Tensor reconstruction_forward(const Tensor& mask_y, NetworkBundle& bundle, Mode mode);
Tensor discriminator_forward(const Tensor& mask, NetworkBundle& bundle, Mode mode);

/// Writes `<stem>.freg` with the bundle state and `<stem>.netcfg` echoing the NetConfig.
void save_bundle(const std::string& stem, const NetworkBundle& bundle);
NetworkBundle load_bundle(const std::string& stem);

std::string net_config_to_text(const NetConfig& config);
NetConfig net_config_from_text(const std::string& text);

}  // namespace footreg
