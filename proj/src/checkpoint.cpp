#include "rlad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rlad/vocab.hpp"

namespace rlad {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'R', 'D'};
constexpr std::uint32_t kSupportedVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  std::istream& is;
  const std::string& path;

  void bytes(void* out, std::size_t n) {
    is.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw Error("truncated checkpoint: " + path);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw Error("corrupt checkpoint (string too long): " + path);
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
};

}  // namespace

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const std::uint64_t* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);

  os.write(kMagic, 4);
  put_u32(os, ckpt.version);
  put_u64(os, ckpt.config_hash);
  put_string(os, ckpt.method);
  put_u64(os, ckpt.step);
  for (std::uint64_t w : ckpt.rng_state) put_u64(os, w);

  put_u32(os, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [key, value] : ckpt.meta) {
    put_string(os, key);
    put_u64(os, value);
  }

  put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_string(os, name);
    const Shape& shape = tensor.shape();
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) put_u64(os, static_cast<std::uint64_t>(e));
    for (double v : tensor.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }

  os.flush();
  if (!os) throw Error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  Reader r{is, path};

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw Error("not a checkpoint file (bad magic): " + path);

  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kSupportedVersion)
    throw Error("unsupported checkpoint version " + std::to_string(ckpt.version) + ": " + path);
  ckpt.config_hash = r.u64();
  ckpt.method = r.str();
  ckpt.step = r.u64();
  for (auto& w : ckpt.rng_state) w = r.u64();

  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string key = r.str();
    const std::uint64_t value = r.u64();
    ckpt.meta.emplace_back(std::move(key), value);
  }

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw Error("corrupt checkpoint (rank too large): " + path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::size_t>(r.u64()));
    const std::size_t numel = shape_numel(shape);
    if (numel > (std::size_t{1} << 28))
      throw Error("corrupt checkpoint (tensor too large): " + path);
    std::vector<double> data(numel);
    for (double& v : data) v = std::bit_cast<double>(r.u64());
    ckpt.tensors.emplace_back(std::move(name), Tensor::from_data(shape, std::move(data)));
  }

  if (is.peek() != std::char_traits<char>::eof())
    throw Error("corrupt checkpoint (trailing bytes): " + path);
  return ckpt;
}

void embed_policy(Checkpoint& ckpt, const PolicyParams& params) {
  ckpt.meta.emplace_back("model.kind", params.kind == ModelKind::tabular ? 0u : 1u);
  ckpt.meta.emplace_back("model.context_window", static_cast<std::uint64_t>(params.context_window));
  ckpt.meta.emplace_back("vocab.size", static_cast<std::uint64_t>(params.vocab.size));
  ckpt.meta.emplace_back("vocab.bos", static_cast<std::uint64_t>(params.vocab.bos));
  ckpt.meta.emplace_back("vocab.eos", static_cast<std::uint64_t>(params.vocab.eos));
  ckpt.meta.emplace_back("vocab.pad", static_cast<std::uint64_t>(params.vocab.pad));
  if (params.kind == ModelKind::tabular) {
    ckpt.meta.emplace_back("model.hash_buckets", static_cast<std::uint64_t>(params.hash_buckets));
  } else {
    ckpt.meta.emplace_back("model.hidden_dim", static_cast<std::uint64_t>(params.hidden_dim));
  }

  for (const auto& [name, tensor] : params.named_tensors()) {
    // Deep copy so later optimizer updates don't mutate the checkpoint.
    ckpt.tensors.emplace_back(
        name, Tensor::from_data(tensor.shape(),
                                std::vector<double>(tensor.data().begin(), tensor.data().end())));
  }
  if (params.kind == ModelKind::tabular) {
    const std::size_t slots = params.table_keys.size();
    std::vector<double> bits(slots);
    for (std::size_t i = 0; i < slots; ++i)
      bits[i] = std::bit_cast<double>(params.table_keys[i]);
    ckpt.tensors.emplace_back("student.table_keys.bits",
                              Tensor::from_data({slots}, std::move(bits)));
  }
}

PolicyParams extract_policy(const Checkpoint& ckpt) {
  auto need_meta = [&](const std::string& key) {
    const std::uint64_t* v = ckpt.find_meta(key);
    if (!v) throw Error("checkpoint missing meta key '" + key + "'");
    return *v;
  };
  auto need_tensor = [&](const std::string& name) -> const Tensor& {
    const Tensor* t = ckpt.find_tensor(name);
    if (!t) throw Error("checkpoint missing tensor '" + name + "'");
    return *t;
  };

  Vocab vocab;
  vocab.size = static_cast<int>(need_meta("vocab.size"));
  vocab.bos = static_cast<int>(need_meta("vocab.bos"));
  vocab.eos = static_cast<int>(need_meta("vocab.eos"));
  vocab.pad = static_cast<int>(need_meta("vocab.pad"));
  vocab.validate();
  const int window = static_cast<int>(need_meta("model.context_window"));

  const std::uint64_t kind = need_meta("model.kind");
  if (kind == 0) {
    const int buckets = static_cast<int>(need_meta("model.hash_buckets"));
    PolicyParams params = PolicyParams::make_tabular(vocab, window, buckets);
    const Tensor& table = need_tensor("student.table");
    if (table.shape() != params.table.shape())
      throw Error("checkpoint table shape mismatch");
    params.table.mutable_data().assign(table.data().begin(), table.data().end());
    const Tensor& bits = need_tensor("student.table_keys.bits");
    if (bits.size() != params.table_keys.size())
      throw Error("checkpoint table_keys length mismatch");
    for (std::size_t i = 0; i < params.table_keys.size(); ++i)
      params.table_keys[i] = std::bit_cast<std::uint64_t>(bits.at(i));
    return params;
  }
  if (kind == 1) {
    const int hidden = static_cast<int>(need_meta("model.hidden_dim"));
    PolicyParams params = PolicyParams::make_mlp(vocab, window, hidden, 0);
    for (const auto& [name, tensor] : params.named_tensors()) {
      const Tensor& src = need_tensor(name);
      if (src.shape() != tensor.shape())
        throw Error("checkpoint tensor '" + name + "' shape mismatch");
      const_cast<Tensor&>(tensor).mutable_data().assign(src.data().begin(), src.data().end());
    }
    return params;
  }
  throw Error("checkpoint has unknown model.kind " + std::to_string(kind));
}

}  // namespace rlad
