#include <bit>
#include <cstring>
#include <sstream>

#include "pcmorph/model.hpp"

namespace pcmorph {
namespace {

constexpr char kMagic[8] = {'P', 'C', 'M', 'O', 'R', 'P', 'H', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw ParseError("checkpoint: truncated (needed " + std::to_string(n) +
                       " bytes at offset " + std::to_string(pos_) + ")");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string join_widths(const std::vector<std::size_t>& widths) {
  std::string s;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(widths[i]);
  }
  return s;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    out.push_back(static_cast<std::size_t>(std::stoull(tok)));
  return out;
}

std::string header_text(const ModelConfig& c) {
  std::string h;
  h += "steps=" + std::to_string(c.steps) + "\n";
  h += "latent_dim=" + std::to_string(c.latent_dim) + "\n";
  h += "activation=" + activation_name(c.activation) + "\n";
  h += "share_step_weights=" + std::to_string(c.share_step_weights ? 1 : 0) +
       "\n";
  h += "encoder_point_layers=" + join_widths(c.encoder_point_layers) + "\n";
  h += "encoder_post_layers=" + join_widths(c.encoder_post_layers) + "\n";
  h += "step_layers=" + join_widths(c.step_layers) + "\n";
  h += "seed=" + std::to_string(c.seed) + "\n";
  return h;
}

ModelConfig parse_header(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  bool saw_steps = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("checkpoint: bad header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "steps") {
        c.steps = std::stoull(val);
        saw_steps = true;
      } else if (key == "latent_dim")
        c.latent_dim = std::stoull(val);
      else if (key == "activation")
        c.activation = activation_from_name(val);
      else if (key == "share_step_weights")
        c.share_step_weights = val == "1";
      else if (key == "encoder_point_layers")
        c.encoder_point_layers = parse_widths(val);
      else if (key == "encoder_post_layers")
        c.encoder_post_layers = parse_widths(val);
      else if (key == "step_layers")
        c.step_layers = parse_widths(val);
      else if (key == "seed")
        c.seed = std::stoull(val);
      else
        throw ParseError("checkpoint: unknown header key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParseError("checkpoint: bad value in header line '" + line + "'");
    } catch (const std::out_of_range&) {
      throw ParseError("checkpoint: bad value in header line '" + line + "'");
    }
  }
  if (!saw_steps) throw ParseError("checkpoint: header missing 'steps'");
  c.validate();
  return c;
}

}  // namespace

std::string save_checkpoint(const ModelParams& params) {
  params.validate();
  std::string out(kMagic, sizeof(kMagic));
  const std::string header = header_text(params.config);
  put_u64(out, header.size());
  out += header;

  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  put_u64(out, tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    put_u64(out, names[i].size());
    out += names[i];
    const ad::Tensor& t = *tensors[i];
    put_u64(out, t.shape.size());
    for (std::size_t dim : t.shape) put_u64(out, dim);
    for (double v : t.data) put_f64(out, v);
  }
  return out;
}

ModelParams load_checkpoint(const std::string& bytes) {
  Cursor cur(bytes);
  if (cur.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw ParseError("checkpoint: bad magic (not a PCMORPH1 file)");

  const std::uint64_t header_len = cur.u64();
  const ModelConfig config = parse_header(cur.str(header_len));

  // Materialize empty parameters with the right structure, then fill.
  ModelParams params;
  params.config = config;
  auto empty_mlp = [](const std::vector<std::size_t>& layers) {
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      mlp.weights.emplace_back(layers[l], layers[l + 1]);
      mlp.biases.emplace_back(1, layers[l + 1]);
    }
    return mlp;
  };
  params.encoder_point = empty_mlp(config.encoder_point_layers);
  params.encoder_post = empty_mlp(config.encoder_post_layers);
  const std::size_t nets = config.share_step_weights ? 1 : config.steps;
  for (std::size_t t = 0; t < nets; ++t)
    params.steps.push_back(empty_mlp(config.step_layers));

  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  const std::uint64_t count = cur.u64();
  if (count != tensors.size())
    throw ParseError("checkpoint: tensor count " + std::to_string(count) +
                     " does not match config (expected " +
                     std::to_string(tensors.size()) + ")");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::uint64_t name_len = cur.u64();
    const std::string name = cur.str(name_len);
    if (name != names[i])
      throw ParseError("checkpoint: tensor " + std::to_string(i) +
                       " named '" + name + "', expected '" + names[i] + "'");
    const std::uint64_t rank = cur.u64();
    ad::Tensor& t = *tensors[i];
    if (rank != t.shape.size())
      throw ParseError("checkpoint: tensor '" + name + "' rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = cur.u64();
      if (dim != t.shape[d])
        throw ParseError("checkpoint: tensor '" + name +
                         "' shape does not match config");
    }
    for (double& v : t.data) v = cur.f64();
  }
  if (!cur.at_end()) throw ParseError("checkpoint: trailing bytes");
  params.validate();
  return params;
}

}  // namespace pcmorph
