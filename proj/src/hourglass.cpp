#include "volrig/hourglass.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace volrig {

using nn::Mode;
using nn::Tensor;

GranularityParam::GranularityParam(double v) : value(v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("granularity must lie in [0, 1]");
}

void NetworkConfig::validate() const {
  if (resolution < 8 || resolution % 8) throw std::invalid_argument("resolution must be a positive multiple of 8");
  if (num_modules < 1) throw std::invalid_argument("num_modules must be at least 1");
  if (input_channels < 1 || granularity_channels < 1) throw std::invalid_argument("channel counts must be positive");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"resolution", resolution}, {"num_modules", num_modules},  {"input_channels", input_channels},
          {"widths", widths},         {"granularity_channels", granularity_channels}, {"dropout", dropout}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.resolution = j.value("resolution", c.resolution);
  c.num_modules = j.value("num_modules", c.num_modules);
  c.input_channels = j.value("input_channels", c.input_channels);
  if (j.contains("widths")) c.widths = j.at("widths").get<std::array<int, 4>>();
  c.granularity_channels = j.value("granularity_channels", c.granularity_channels);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

namespace {

using namespace layers;

// He fan-in initialization, zero biases.
Conv make_conv(int k, int cin, int cout, int stride, Rng& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * k * cin));
  std::vector<float> w(static_cast<std::size_t>(k) * k * k * cin * cout);
  for (float& v : w) v = static_cast<float>(stddev * rng.normal());
  return {Tensor::from({k, k, k, cin, cout}, std::move(w), true), Tensor::zeros({cout}, true), stride};
}

BatchNorm make_bn(int c) { return {Tensor::full({c}, 1.0f, true), Tensor::zeros({c}, true), nn::BatchNormState<float>(c)}; }

ConvBn make_conv_bn(int k, int cin, int cout, int stride, Rng& rng) { return {make_conv(k, cin, cout, stride, rng), make_bn(cout)}; }

ResBlock make_res(int cin, int cout, Rng& rng) {
  ResBlock r{make_conv_bn(3, cin, cout, 1, rng), make_conv_bn(3, cout, cout, 1, rng), nullptr};
  if (cin != cout) r.projection = std::make_unique<ConvBn>(make_conv_bn(3, cin, cout, 1, rng));
  return r;
}

Up make_up(int cin, int cout, Rng& rng) {
  Conv c = make_conv(2, cin, cout, 2, rng);
  return {c.weight, c.bias, make_bn(cout)};
}

Branch make_branch(int cin, Rng& rng) {
  return {make_res(cin, 4, rng), make_conv_bn(1, 4, 4, 1, rng), make_conv(1, 4, 1, 1, rng)};
}

Hourglass make_hourglass(int in_ch, const NetworkConfig& cfg, Rng& rng) {
  const auto& w = cfg.widths;
  Hourglass h;
  h.down[0] = make_conv_bn(2, in_ch, in_ch, 2, rng);
  h.encode[0] = make_res(in_ch, w[1], rng);
  h.down[1] = make_conv_bn(2, w[1], w[1], 2, rng);
  h.encode[1] = make_res(w[1], w[2], rng);
  h.down[2] = make_conv_bn(2, w[2], w[2], 2, rng);
  h.encode[2] = make_res(w[2], w[3], rng);
  const int gc = cfg.granularity_channels;
  std::vector<float> gw(static_cast<std::size_t>(gc));
  for (float& v : gw) v = static_cast<float>(std::sqrt(2.0) * rng.normal());
  h.granularity_weight = Tensor::from({gc}, std::move(gw), true);
  h.granularity_bias = Tensor::zeros({gc}, true);
  const int code = w[3] + gc;
  h.bottleneck = make_res(code, code, rng);
  h.decode[2] = make_res(code, w[3], rng);
  h.skip[2] = make_res(w[3], w[3], rng);
  h.up[2] = make_up(w[3], w[2], rng);
  h.decode[1] = make_res(w[2], w[2], rng);
  h.skip[1] = make_res(w[2], w[2], rng);
  h.up[1] = make_up(w[2], w[1], rng);
  h.decode[0] = make_res(w[1], w[1], rng);
  h.skip[0] = make_res(w[1], w[1], rng);
  h.up[0] = make_up(w[1], w[0], rng);
  h.joint = make_branch(w[0], rng);
  h.bone = make_branch(w[0], rng);
  return h;
}

struct Ctx {
  Mode mode;
  Rng* rng;
  LayerTrace* trace;
  double dropout;

  Tensor record(const std::string& name, Tensor t) const {
    if (trace) trace->emplace_back(name, t.shape());
    return t;
  }
};

Tensor bn(const Tensor& x, BatchNorm& b, const Ctx& ctx) { return nn::batchnorm3d(x, b.gamma, b.beta, b.state, ctx.mode); }

Tensor conv_bn_relu(const Tensor& x, ConvBn& c, const Ctx& ctx) {
  return nn::relu(bn(nn::conv3d(x, c.conv.weight, c.conv.bias, c.conv.stride), c.bn, ctx));
}

Tensor res_block(const Tensor& x, ResBlock& r, const Ctx& ctx) {
  Tensor h = conv_bn_relu(x, r.first, ctx);
  h = bn(nn::conv3d(h, r.second.conv.weight, r.second.conv.bias, 1), r.second.bn, ctx);
  Tensor skip = r.projection ? bn(nn::conv3d(x, r.projection->conv.weight, r.projection->conv.bias, 1), r.projection->bn, ctx) : x;
  return nn::relu(nn::add(h, skip));
}

Tensor up(const Tensor& x, Up& u, const Ctx& ctx) { return nn::relu(bn(nn::conv_transpose3d(x, u.weight, u.bias), u.bn, ctx)); }

Tensor branch(const Tensor& x, Branch& b, const Ctx& ctx, const std::string& name) {
  Tensor h = ctx.record(name + ".res", res_block(x, b.block, ctx));
  h = ctx.record(name + ".reduce", nn::dropout(conv_bn_relu(h, b.reduce, ctx), ctx.dropout, ctx.mode, *ctx.rng));
  h = ctx.record(name + ".out", nn::conv3d(h, b.out.weight, b.out.bias, 1));
  return nn::sigmoid(h);
}

using Visitor = std::function<void(const std::string&, const Tensor&, bool /*buffer*/)>;

void visit_bn(const std::string& p, const BatchNorm& b, const Visitor& f) {
  f(p + ".gamma", b.gamma, false);
  f(p + ".beta", b.beta, false);
  f(p + ".running_mean", b.state.running_mean, true);
  f(p + ".running_var", b.state.running_var, true);
}
void visit_conv(const std::string& p, const Conv& c, const Visitor& f) {
  f(p + ".weight", c.weight, false);
  f(p + ".bias", c.bias, false);
}
void visit_conv_bn(const std::string& p, const ConvBn& c, const Visitor& f) {
  visit_conv(p + ".conv", c.conv, f);
  visit_bn(p + ".bn", c.bn, f);
}
void visit_res(const std::string& p, const ResBlock& r, const Visitor& f) {
  visit_conv_bn(p + ".conv1", r.first, f);
  visit_conv_bn(p + ".conv2", r.second, f);
  if (r.projection) visit_conv_bn(p + ".proj", *r.projection, f);
}
void visit_branch(const std::string& p, const Branch& b, const Visitor& f) {
  visit_res(p + ".res", b.block, f);
  visit_conv_bn(p + ".reduce", b.reduce, f);
  visit_conv(p + ".out", b.out, f);
}

}  // namespace

HourglassNetwork::HourglassNetwork(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  pre_conv_ = make_conv_bn(5, config_.input_channels, config_.widths[0], 1, rng);
  pre_block_ = make_res(config_.widths[0], config_.widths[0], rng);
  for (int m = 0; m < config_.num_modules; ++m) {
    const int in_ch = m == 0 ? config_.widths[0] : config_.widths[0] + 2;
    stack_.push_back(make_hourglass(in_ch, config_, rng));
  }
}

StackOutputs HourglassNetwork::forward(const Tensor& input, GranularityParam granularity, Mode mode, Rng& rng,
                                       LayerTrace* trace) {
  const int r = config_.resolution;
  if (input.shape() != nn::Shape{r, r, r, config_.input_channels})
    throw nn::ShapeError("network input must be " + nn::shape_str({r, r, r, config_.input_channels}) + ", got " +
                         nn::shape_str(input.shape()));
  const Ctx ctx{mode, &rng, trace, config_.dropout};
  StackOutputs out;
  ctx.record("input", input);
  Tensor s1 = ctx.record("pre.conv", conv_bn_relu(input, pre_conv_, ctx));
  s1 = ctx.record("pre.res", res_block(s1, pre_block_, ctx));
  out.shape_features = s1;

  for (std::size_t m = 0; m < stack_.size(); ++m) {
    Hourglass& h = stack_[m];
    const std::string p = "stack." + std::to_string(m);
    Tensor x = m == 0 ? s1 : nn::concat(nn::concat(out.joint.back(), out.bone.back()), s1);
    if (m > 0) ctx.record(p + ".input", x);

    std::array<Tensor, 3> enc;
    for (int level = 0; level < 3; ++level) {
      x = ctx.record(p + ".down" + std::to_string(level + 1), conv_bn_relu(x, h.down[level], ctx));
      x = ctx.record(p + ".enc" + std::to_string(level + 1), res_block(x, h.encode[level], ctx));
      enc[level] = x;
    }
    const Tensor gmap = nn::affine_tile(granularity.value, h.granularity_weight, h.granularity_bias, x.dim(0), x.dim(1), x.dim(2));
    x = ctx.record(p + ".concat_granularity", nn::concat(x, gmap));
    x = ctx.record(p + ".bottleneck", res_block(x, h.bottleneck, ctx));
    for (int level = 2; level >= 0; --level) {
      const std::string l = std::to_string(level + 1);
      Tensor d = res_block(x, h.decode[level], ctx);
      d = ctx.record(p + ".dec" + l, nn::add(d, res_block(enc[level], h.skip[level], ctx)));
      x = ctx.record(p + ".up" + l, up(d, h.up[level], ctx));
    }
    out.joint.push_back(ctx.record(p + ".joint", branch(x, h.joint, ctx, p + ".joint")));
    out.bone.push_back(ctx.record(p + ".bone", branch(x, h.bone, ctx, p + ".bone")));
  }
  return out;
}

std::vector<nn::Parameter<float>> HourglassNetwork::state() const {
  std::vector<nn::Parameter<float>> out;
  const Visitor f = [&](const std::string& name, const Tensor& t, bool) { out.push_back({name, t}); };
  visit_conv_bn("pre.conv", pre_conv_, f);
  visit_res("pre.res", pre_block_, f);
  for (std::size_t m = 0; m < stack_.size(); ++m) {
    const Hourglass& h = stack_[m];
    const std::string p = "stack." + std::to_string(m);
    for (int l = 0; l < 3; ++l) {
      visit_conv_bn(p + ".down" + std::to_string(l + 1), h.down[l], f);
      visit_res(p + ".enc" + std::to_string(l + 1), h.encode[l], f);
    }
    f(p + ".granularity.weight", h.granularity_weight, false);
    f(p + ".granularity.bias", h.granularity_bias, false);
    visit_res(p + ".bottleneck", h.bottleneck, f);
    for (int l = 2; l >= 0; --l) {
      const std::string s = std::to_string(l + 1);
      visit_res(p + ".dec" + s, h.decode[l], f);
      visit_res(p + ".skip" + s, h.skip[l], f);
      f(p + ".up" + s + ".weight", h.up[l].weight, false);
      f(p + ".up" + s + ".bias", h.up[l].bias, false);
      visit_bn(p + ".up" + s + ".bn", h.up[l].bn, f);
    }
    visit_branch(p + ".joint", h.joint, f);
    visit_branch(p + ".bone", h.bone, f);
  }
  return out;
}

std::vector<nn::Parameter<float>> HourglassNetwork::parameters() const {
  std::vector<nn::Parameter<float>> out;
  for (auto& p : state())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

std::size_t HourglassNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

nn::Tensor make_input_tensor(int resolution, int channels, const std::vector<float>& data) {
  return nn::Tensor::from({resolution, resolution, resolution, channels}, data, false);
}

}  // namespace volrig
