#include "perfalign/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "PFALCKPT";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

void check_finite(const std::string& name, const Matrix& m) {
  if (!all_finite(m)) throw NumericalError("tensor '" + name + "' contains non-finite values");
}

template <typename F>
void for_each_tensor(const Checkpoint& c, F&& f) {
  c.weights.for_each(f);
  for (const auto& [name, m] : c.extras) f("extra." + name, m);
}

json config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers}, {"heads", c.heads}, {"width", c.width}, {"context", c.context}, {"vocab", c.vocab}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.context = j.at("context").get<int>();
  c.vocab = j.at("vocab").get<int>();
  return c;
}

}  // namespace

const char* to_string(Role role) {
  switch (role) {
    case Role::base: return "base";
    case Role::sft: return "sft";
    case Role::rlpf: return "rlpf";
    case Role::dpa: return "dpa";
    case Role::reward: return "reward";
  }
  return "base";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::base, Role::sft, Role::rlpf, Role::dpa, Role::reward}) {
    if (name == to_string(r)) return r;
  }
  throw ParseError("unknown checkpoint role '" + std::string(name) + "'");
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (role != other.role || !(tokenizer == other.tokenizer) || !(weights == other.weights)) return false;
  if (extras.size() != other.extras.size()) return false;
  for (const auto& [name, m] : extras) {
    auto it = other.extras.find(name);
    if (it == other.extras.end()) return false;
    const Matrix& o = it->second;
    if (m.rows() != o.rows() || m.cols() != o.cols() || !(m == o)) return false;
  }
  return true;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json tensors = json::array();
  std::string payload;
  for_each_tensor(ckpt, [&](const std::string& name, const Matrix& m) {
    check_finite(name, m);
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()}});
    payload.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(Scalar));
  });
  const json header{{"format", kCheckpointFormat},
                    {"role", to_string(ckpt.role)},
                    {"config", config_to_json(ckpt.weights.config)},
                    {"vocabulary", ckpt.tokenizer.vocabulary()},
                    {"tensors", tensors}};
  const std::string text = header.dump();
  std::string out(kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError("not a checkpoint file (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagic.size(), sizeof len);
  const std::size_t header_start = kMagic.size() + 8;
  if (len > bytes.size() - header_start) throw ParseError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.substr(header_start, len));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header_start + len);

  try {
    const int format = header.at("format").get<int>();
    if (format != kCheckpointFormat) throw ParseError("unsupported checkpoint format " + std::to_string(format));
    Checkpoint c;
    c.role = role_from_string(header.at("role").get<std::string>());
    c.tokenizer = Tokenizer(header.at("vocabulary").get<std::vector<std::string>>());
    c.weights = Weights::zeros(config_from_json(header.at("config")));

    std::map<std::string, Matrix*> slots;
    c.weights.for_each([&](const std::string& name, Matrix& m) { slots[name] = &m; });
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(Scalar);
      if (rows < 0 || cols < 0 || offset > payload.size() || n > payload.size() - offset) {
        throw ParseError("tensor '" + name + "' lies outside the payload");
      }
      Matrix* target = nullptr;
      if (name.starts_with("extra.")) {
        target = &c.extras[name.substr(6)];
        target->resize(rows, cols);
      } else {
        auto it = slots.find(name);
        if (it == slots.end()) throw ParseError("unexpected tensor '" + name + "'");
        target = it->second;
        if (target->rows() != rows || target->cols() != cols) {
          throw ParseError("tensor '" + name + "' has the wrong shape");
        }
        slots.erase(it);
      }
      std::memcpy(target->data(), payload.data() + offset, n);
      check_finite(name, *target);
    }
    if (!slots.empty()) throw ParseError("checkpoint is missing tensor '" + slots.begin()->first + "'");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("checkpoint not found: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

Checkpoint make_base_checkpoint(ModelConfig config, const Tokenizer& tokenizer, std::uint64_t seed, bool zero_head) {
  config.vocab = tokenizer.size();
  Rng rng(seed);
  Checkpoint c;
  c.weights = Weights::init(config, rng, zero_head);
  c.tokenizer = tokenizer;
  c.role = Role::base;
  return c;
}

}  // namespace perfalign
