#include "omniban/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "omniban/errors.hpp"

namespace omniban {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'O', 'M', 'N', 'I', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Model& model) {
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, model.config().hash());
  put_string(os, model.config().canonical());
  std::uint32_t count = 0;
  model.visit_parameters([&count](const std::string&, const Tensor&) { ++count; });
  put<std::uint32_t>(os, count);
  model.visit_parameters([&os](const std::string& name, const Tensor& t) {
    put_string(os, name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!os) throw IoError("checkpoint write failed");
}

Model read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hash = get<std::uint64_t>(is);
  const FusionConfig config = FusionConfig::from_canonical(get_string(is));
  if (config.hash() != hash) throw IoError("checkpoint config hash mismatch");

  Rng scratch(0);
  Model model(config, scratch);
  const auto count = get<std::uint32_t>(is);
  std::uint32_t seen = 0;
  model.visit_parameters([&](const std::string& name, Tensor& t) {
    if (seen++ >= count) throw IoError("checkpoint has too few tensors");
    const std::string stored = get_string(is);
    if (stored != name) throw IoError("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    const auto rank = get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    if (shape != t.shape()) throw IoError("checkpoint tensor '" + name + "' has shape " + to_string(shape));
    std::vector<double> data(numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint");
    }
    t = Tensor(std::move(shape), std::move(data));
  });
  if (seen != count) throw IoError("checkpoint has extra tensors");
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(os, model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_checkpoint(is);
}

bool same_parameters(const Model& a, const Model& b) {
  if (a.config().canonical() != b.config().canonical()) return false;
  std::vector<Tensor> ta, tb;
  a.visit_parameters([&ta](const std::string&, const Tensor& t) { ta.push_back(t); });
  b.visit_parameters([&tb](const std::string&, const Tensor& t) { tb.push_back(t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!bit_equal(ta[i], tb[i])) return false;
  }
  return true;
}

}  // namespace omniban
