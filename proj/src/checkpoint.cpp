#include "sct/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sct/error.hpp"

namespace sct {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const uint32_t len = get<uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw DataError("truncated checkpoint string");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, CodeModel& model,
                     const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  put<uint64_t>(f, meta.vocab_hash);
  put<uint64_t>(f, meta.node_vocab_hash);
  put<int64_t>(f, meta.step);
  const auto kv = model.config().to_kv();
  put<uint32_t>(f, static_cast<uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    put_string(f, k);
    put_string(f, v);
  }
  put<uint32_t>(f, static_cast<uint32_t>(meta.languages.size()));
  for (const auto& l : meta.languages) put_string(f, l);
  uint32_t count = 0;
  model.for_each_param([&](const std::string&, Tensor&) { ++count; });
  put<uint32_t>(f, count);
  model.for_each_param([&](const std::string& name, Tensor& t) {
    put_string(f, name);
    put<int32_t>(f, t.rows());
    put<int32_t>(f, t.cols());
    f.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  });
  if (!f) throw DataError("failed writing checkpoint: " + path);
}

CodeModel load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("bad checkpoint magic in " + path);
  }
  CheckpointMeta meta;
  meta.vocab_hash = get<uint64_t>(f);
  meta.node_vocab_hash = get<uint64_t>(f);
  meta.step = get<int64_t>(f);
  std::map<std::string, std::string> kv;
  const uint32_t nkv = get<uint32_t>(f);
  for (uint32_t i = 0; i < nkv; ++i) {
    std::string k = get_string(f);
    kv[k] = get_string(f);
  }
  meta.config = ModelConfig::from_kv(kv);
  const uint32_t nlang = get<uint32_t>(f);
  for (uint32_t i = 0; i < nlang; ++i) meta.languages.push_back(get_string(f));

  CodeModel model(meta.config, /*seed=*/0);
  const uint32_t count = get<uint32_t>(f);
  std::map<std::string, std::pair<std::vector<double>, std::pair<int, int>>>
      tensors;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(f);
    const int r = get<int32_t>(f);
    const int c = get<int32_t>(f);
    std::vector<double> data(size_t(r) * c);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!f) throw DataError("truncated tensor " + name + " in " + path);
    tensors[name] = {std::move(data), {r, c}};
  }
  model.for_each_param([&](const std::string& name, Tensor& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw DataError("checkpoint missing tensor " + name);
    }
    const auto& [data, shape] = it->second;
    if (shape.first != t.rows() || shape.second != t.cols()) {
      throw DataError("checkpoint tensor " + name + " has shape " +
                      std::to_string(shape.first) + "x" +
                      std::to_string(shape.second) + ", expected " +
                      std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    t.data() = data;
  });
  if (meta_out) *meta_out = meta;
  return model;
}

}  // namespace sct
