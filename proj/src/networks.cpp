#include "footreg/networks.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace footreg {

void NetConfig::validate() const {
  if (image_size <= 0 || (image_size & (image_size - 1)) != 0) {
    throw std::invalid_argument("image_size must be a power of two, got " +
                                std::to_string(image_size));
  }
  if (depth < 1 || base_channels < 1 || in_channels_g < 1 || in_channels_r < 1) {
    throw std::invalid_argument("depth, base_channels and input channels must be positive");
  }
  if ((image_size >> depth) < 4) {
    throw std::invalid_argument("image_size / 2^depth must be at least 4 (got " +
                                std::to_string(image_size >> depth) + ")");
  }
}

ConvBlock::ConvBlock(int in_channels, int out_channels)
    : weight(Tensor::zeros({out_channels, in_channels, 3, 3}, true)),
      bias(Tensor::zeros({out_channels}, true)),
      gamma(Tensor::full({out_channels}, 1.0f, true)),
      beta(Tensor::zeros({out_channels}, true)),
      stats(out_channels) {}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  return relu(batch_norm(conv2d(x, weight, bias), gamma, beta, stats, mode));
}

ScoreHead::ScoreHead(int in_channels)
    : weight(Tensor::zeros({1, in_channels, 1, 1}, true)), bias(Tensor::zeros({1}, true)) {}

Tensor ScoreHead::forward(const Tensor& x) const { return sigmoid(conv2d(x, weight, bias)); }

Encoder::Encoder(const NetConfig& config, int in_channels) {
  int channels = in_channels;
  for (int s = 0; s < config.depth; ++s) {
    stages.emplace_back(channels, config.channels_at(s));
    channels = config.channels_at(s);
  }
  latent = ConvBlock(channels, config.channels_at(config.depth));
}

Tensor Encoder::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& stage : stages) h = max_pool2(stage.forward(h, mode));
  return latent.forward(h, mode);
}

Decoder::Decoder(const NetConfig& config) {
  for (int s = config.depth; s >= 1; --s) {
    stages.emplace_back(config.channels_at(s), config.channels_at(s - 1));
  }
  refine = ConvBlock(config.channels_at(0), config.channels_at(0));
  head = ScoreHead(config.channels_at(0));
}

Tensor Decoder::forward(const Tensor& latent, Mode mode) {
  Tensor h = latent;
  for (auto& stage : stages) h = upsample2(stage.forward(h, mode));
  return head.forward(refine.forward(h, mode));
}

Discriminator::Discriminator(const NetConfig& config)
    : body(config, 1), head(config.channels_at(config.depth)) {}

Tensor Discriminator::forward(const Tensor& mask, Mode mode) {
  return sample_mean(head.forward(body.forward(mask, mode)));
}

// ---- parameter bookkeeping ---------------------------------------------------

namespace {

void add_block(std::vector<NamedTensor>& out, const std::string& prefix, const ConvBlock& b) {
  out.push_back({prefix + ".conv.weight", b.weight});
  out.push_back({prefix + ".conv.bias", b.bias});
  out.push_back({prefix + ".bn.gamma", b.gamma});
  out.push_back({prefix + ".bn.beta", b.beta});
}

void add_head(std::vector<NamedTensor>& out, const std::string& prefix, const ScoreHead& h) {
  out.push_back({prefix + ".weight", h.weight});
  out.push_back({prefix + ".bias", h.bias});
}

void add_encoder(std::vector<NamedTensor>& out, const std::string& prefix, const Encoder& e) {
  for (std::size_t s = 0; s < e.stages.size(); ++s) {
    add_block(out, prefix + ".stage" + std::to_string(s), e.stages[s]);
  }
  add_block(out, prefix + ".latent", e.latent);
}

template <typename Bundle, typename Fn>
void for_each_block(Bundle& bundle, Fn&& fn) {
  auto encoder = [&](const std::string& prefix, auto& e) {
    for (std::size_t s = 0; s < e.stages.size(); ++s) {
      fn(prefix + ".stage" + std::to_string(s), e.stages[s]);
    }
    fn(prefix + ".latent", e.latent);
  };
  encoder("EG", bundle.encoder_g);
  encoder("ER", bundle.encoder_r);
  for (std::size_t s = 0; s < bundle.decoder.stages.size(); ++s) {
    fn("F.stage" + std::to_string(s), bundle.decoder.stages[s]);
  }
  fn("F.refine", bundle.decoder.refine);
  encoder("D", bundle.discriminator.body);
}

bool is_weight(const std::string& name) {
  return name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0;
}

}  // namespace

std::vector<NamedTensor> NetworkBundle::parameters(Part part) const {
  std::vector<NamedTensor> out;
  switch (part) {
    case Part::encoder_g:
      add_encoder(out, "EG", encoder_g);
      break;
    case Part::encoder_r:
      add_encoder(out, "ER", encoder_r);
      break;
    case Part::decoder:
      for (std::size_t s = 0; s < decoder.stages.size(); ++s) {
        add_block(out, "F.stage" + std::to_string(s), decoder.stages[s]);
      }
      add_block(out, "F.refine", decoder.refine);
      add_head(out, "F.head", decoder.head);
      break;
    case Part::discriminator:
      add_encoder(out, "D", discriminator.body);
      add_head(out, "D.head", discriminator.head);
      break;
  }
  return out;
}

std::vector<Tensor> NetworkBundle::generator_parameters() const {
  std::vector<Tensor> out;
  for (Part p : {Part::encoder_g, Part::encoder_r, Part::decoder}) {
    for (auto& nt : parameters(p)) out.push_back(nt.tensor);
  }
  return out;
}

std::vector<Tensor> NetworkBundle::discriminator_parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : parameters(Part::discriminator)) out.push_back(nt.tensor);
  return out;
}

std::size_t NetworkBundle::parameter_count() const {
  std::size_t n = 0;
  for (Part p : {Part::encoder_g, Part::encoder_r, Part::decoder, Part::discriminator}) {
    for (auto& nt : parameters(p)) n += nt.tensor.numel();
  }
  return n;
}

std::vector<NamedTensor> NetworkBundle::state() const {
  std::vector<NamedTensor> out;
  for (Part p : {Part::encoder_g, Part::encoder_r, Part::decoder, Part::discriminator}) {
    for (auto& nt : parameters(p)) out.push_back(nt);
  }
  for_each_block(*this, [&](const std::string& prefix, const ConvBlock& b) {
    const int c = static_cast<int>(b.stats.mean.size());
    out.push_back({prefix + ".bn.running_mean", Tensor::from_data({c}, b.stats.mean)});
    out.push_back({prefix + ".bn.running_var", Tensor::from_data({c}, b.stats.var)});
    out.push_back({prefix + ".bn.initialized",
                   Tensor::from_data({1}, {b.stats.initialized ? 1.0f : 0.0f})});
  });
  return out;
}

void NetworkBundle::load_state(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  auto fetch = [&](const std::string& name, std::span<float> dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second->numel() != dst.size()) {
      throw FormatError("tensor '" + name + "' has " + std::to_string(it->second->numel()) +
                        " values, expected " + std::to_string(dst.size()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  };
  for (Part p : {Part::encoder_g, Part::encoder_r, Part::decoder, Part::discriminator}) {
    for (auto& nt : parameters(p)) fetch(nt.name, nt.tensor.data());
  }
  for_each_block(*this, [&](const std::string& prefix, ConvBlock& b) {
    fetch(prefix + ".bn.running_mean", b.stats.mean);
    fetch(prefix + ".bn.running_var", b.stats.var);
    float flag = 0.0f;
    fetch(prefix + ".bn.initialized", std::span<float>(&flag, 1));
    b.stats.initialized = flag != 0.0f;
  });
}

NetworkBundle init_parameters(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkBundle bundle;
  bundle.config = config;
  bundle.encoder_g = Encoder(config, config.in_channels_g);
  bundle.encoder_r = Encoder(config, config.in_channels_r);
  bundle.decoder = Decoder(config);
  bundle.discriminator = Discriminator(config);

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  for (Part p : {Part::encoder_g, Part::encoder_r, Part::decoder, Part::discriminator}) {
    for (auto& nt : bundle.parameters(p)) {
      if (!is_weight(nt.name)) continue;
      for (auto& v : nt.tensor.data()) v = normal(rng);
    }
  }
  return bundle;
}

// ---- forward paths -----------------------------------------------------------

namespace {

void check_mask_input(const char* op, const Tensor& t, int channels, const NetConfig& config) {
  if (t.rank() != 4 || t.dim(1) != channels) {
    throw ShapeError(op, "expected [N," + std::to_string(channels) + ",H,W], got " +
                             shape_to_string(t.shape()));
  }
  const int unit = 1 << config.depth;
  if (t.dim(2) % unit != 0 || t.dim(3) % unit != 0) {
    throw ShapeError(op, "H and W must be divisible by 2^depth = " + std::to_string(unit) +
                             ", got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor generator_forward(const Tensor& mask_x, const Tensor& image_z, NetworkBundle& bundle,
                         Mode mode) {
  check_mask_input("generator_forward", mask_x, 1, bundle.config);
  check_mask_input("generator_forward", image_z, bundle.config.in_channels_g - 1, bundle.config);
  if (mask_x.dim(0) != image_z.dim(0) || mask_x.dim(2) != image_z.dim(2) ||
      mask_x.dim(3) != image_z.dim(3)) {
    throw ShapeError("generator_forward", "mask " + shape_to_string(mask_x.shape()) +
                                              " and image " + shape_to_string(image_z.shape()) +
                                              " disagree");
  }
  Tensor input = concat_channels(image_z, mask_x);
  return bundle.decoder.forward(bundle.encoder_g.forward(input, mode), mode);
}

Tensor reconstruction_forward(const Tensor& mask_y, NetworkBundle& bundle, Mode mode) {
  check_mask_input("reconstruction_forward", mask_y, bundle.config.in_channels_r, bundle.config);
  return bundle.decoder.forward(bundle.encoder_r.forward(mask_y, mode), mode);
}

Tensor discriminator_forward(const Tensor& mask, NetworkBundle& bundle, Mode mode) {
  check_mask_input("discriminator_forward", mask, 1, bundle.config);
  return bundle.discriminator.forward(mask, mode);
}

// ---- persistence --------------------------------------------------------------

std::string net_config_to_text(const NetConfig& c) {
  std::ostringstream out;
  out << "image_size = " << c.image_size << '\n'
      << "base_channels = " << c.base_channels << '\n'
      << "depth = " << c.depth << '\n'
      << "in_channels_g = " << c.in_channels_g << '\n'
      << "in_channels_r = " << c.in_channels_r << '\n';
  return out.str();
}

NetConfig net_config_from_text(const std::string& text) {
  NetConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    key.erase(0, key.find_first_not_of(" \t"));
    const int value = std::stoi(line.substr(eq + 1));
    if (key == "image_size") c.image_size = value;
    else if (key == "base_channels") c.base_channels = value;
    else if (key == "depth") c.depth = value;
    else if (key == "in_channels_g") c.in_channels_g = value;
    else if (key == "in_channels_r") c.in_channels_r = value;
    else throw FormatError("unknown network config key '" + key + "'");
  }
  c.validate();
  return c;
}

void save_bundle(const std::string& stem, const NetworkBundle& bundle) {
  save_tensors(stem + ".freg", bundle.state());
  std::ofstream cfg(stem + ".netcfg", std::ios::trunc);
  if (!cfg) throw FormatError("cannot write " + stem + ".netcfg");
  cfg << net_config_to_text(bundle.config);
}

NetworkBundle load_bundle(const std::string& stem) {
  std::ifstream cfg(stem + ".netcfg");
  if (!cfg) throw FormatError("missing network config sidecar " + stem + ".netcfg");
  std::stringstream text;
  text << cfg.rdbuf();
  NetworkBundle bundle = init_parameters(net_config_from_text(text.str()), 0);
  bundle.load_state(load_tensors(stem + ".freg"));
  return bundle;
}

}  // namespace footreg
