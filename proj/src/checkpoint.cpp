#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ulre/trainer.hpp"

namespace ulre {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'R', 'E'};

template <typename U>
void put(std::ostream& os, U v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    auto bytes = std::bit_cast<std::array<char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(U));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
}

class Reader {
 public:
  Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  template <typename U>
  U get(const std::string& field) {
    std::array<char, sizeof(U)> bytes;
    if (!is_.read(bytes.data(), sizeof(U))) fail("truncated " + field);
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }

  std::string text(std::size_t n, const std::string& field) {
    std::string s(n, '\0');
    if (n && !is_.read(s.data(), static_cast<std::streamsize>(n))) fail("truncated " + field);
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_ + ": " + what); }

 private:
  std::istream& is_;
  std::string source_;
};

void write_tensor(std::ostream& os, const std::string& name, const Tensor<double>& t, Precision precision) {
  if (name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
  put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(os, precision == Precision::F32 ? 0 : 1);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(os, d);
  for (double v : t.values()) {
    if (precision == Precision::F32)
      put<float>(os, static_cast<float>(v));
    else
      put<double>(os, v);
  }
}

const char* kSceneMarker = "[scene]\n";

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  const Precision prec = ck.config.precision;
  std::uint32_t count = static_cast<std::uint32_t>(ck.params.size() + ck.adam_m.size() + ck.adam_v.size());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, count);
  for (const auto& p : ck.params) write_tensor(os, p.name, p.value, prec);
  for (const auto& p : ck.adam_m) write_tensor(os, "adam.m." + p.name, p.value, prec);
  for (const auto& p : ck.adam_v) write_tensor(os, "adam.v." + p.name, p.value, prec);

  std::ostringstream text;
  text << ck.config.serialize() << kSceneMarker;
  write_geometry(text, ck.geom, SceneInfo{ck.bounds, std::nullopt});
  const std::string s = text.str();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
  put<std::uint64_t>(os, ck.iteration);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.rng_state.size()));
  os.write(ck.rng_state.data(), static_cast<std::streamsize>(ck.rng_state.size()));
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, ck);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(std::istream& is, const std::string& source) {
  Reader in(is, source);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) in.fail("bad magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    in.fail("version mismatch: file has " + std::to_string(version) + ", expected " +
            std::to_string(kCheckpointVersion));
  const auto count = in.get<std::uint32_t>("tensor count");

  struct Raw {
    std::string name;
    std::uint8_t dtype;
    Tensor<double> value;
  };
  std::vector<Raw> raws;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string where = "tensor " + std::to_string(k);
    const auto len = in.get<std::uint16_t>(where + " name length");
    Raw r;
    r.name = in.text(len, where + " name");
    const std::string field = "tensor '" + r.name + "'";
    r.dtype = in.get<std::uint8_t>(field + " dtype");
    if (r.dtype > 1) in.fail(field + ": unknown dtype " + std::to_string(r.dtype));
    const auto rank = in.get<std::uint8_t>(field + " rank");
    typename Tensor<double>::Shape shape;
    std::size_t volume = 1;
    for (int d = 0; d < rank; ++d) {
      shape.push_back(in.get<std::uint64_t>(field + " dims"));
      volume *= shape.back();
      if (volume > (std::size_t{1} << 32)) in.fail(field + ": implausible size");
    }
    std::vector<double> data(volume);
    for (auto& v : data) v = r.dtype == 0 ? in.get<float>(field) : in.get<double>(field);
    r.value = Tensor<double>(shape, std::move(data));
    raws.push_back(std::move(r));
  }

  const auto text_len = in.get<std::uint32_t>("config length");
  const std::string text = in.text(text_len, "config");
  Checkpoint ck;
  ck.iteration = in.get<std::uint64_t>("iteration");
  const auto rng_len = in.get<std::uint32_t>("RNG state length");
  ck.rng_state = in.text(rng_len, "RNG state");

  const auto split = text.find(kSceneMarker);
  if (split == std::string::npos) in.fail("config: missing scene section");
  {
    std::istringstream cs(text.substr(0, split));
    ck.config = parse_train_config(cs, source + " config");
    std::istringstream gs(text.substr(split + std::strlen(kSceneMarker)));
    SceneInfo scene;
    ck.geom = read_geometry(gs, &scene, source + " scene");
    if (!scene.bounds) in.fail("scene: missing bounds");
    ck.bounds = *scene.bounds;
  }

  // Names and shapes must match the network the config describes.
  const ParamSet<double> expected = zero_network<double>(ck.config.network);
  const std::uint8_t dtype = ck.config.precision == Precision::F32 ? 0 : 1;
  std::size_t next = 0;
  auto take = [&](const std::string& prefix, ParamSet<double>& into) {
    for (const auto& e : expected) {
      if (next >= raws.size()) in.fail("missing tensor '" + prefix + e.name + "'");
      Raw& r = raws[next++];
      if (r.name != prefix + e.name) in.fail("tensor '" + r.name + "': expected '" + prefix + e.name + "'");
      if (r.value.shape() != e.value.shape())
        in.fail("tensor '" + r.name + "': shape " + shape_string(r.value.shape()) + ", expected " +
                shape_string(e.value.shape()));
      if (r.dtype != dtype) in.fail("tensor '" + r.name + "': dtype does not match precision");
      into.push_back({e.name, std::move(r.value)});
    }
  };
  take("", ck.params);
  if (raws.size() > expected.size()) {
    take("adam.m.", ck.adam_m);
    take("adam.v.", ck.adam_v);
  }
  if (next != raws.size()) in.fail("unexpected tensor '" + raws[next].name + "'");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace ulre
