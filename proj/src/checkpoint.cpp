#include "scg/checkpoint.hpp"

#include <map>

#include "scg/binary_io.hpp"
#include "scg/error.hpp"

namespace scg {

namespace {
constexpr std::string_view kMagic = "SCGT";
}

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u32(checked_u32(tensors.size(), "tensor count"));
  std::vector<float> payload;
  for (const auto& [name, tensor] : tensors) {
    w.put_u32(checked_u32(name.size(), "name length"));
    w.put_bytes(name);
    w.put_u32(checked_u32(tensor.rank(), "rank"));
    for (std::size_t d : tensor.shape()) w.put_u32(checked_u32(d, "dimension"));
    payload.assign(tensor.data().begin(), tensor.data().end());
    w.put_f32_array(payload);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_bytes(4) != kMagic) {
    throw IncompatibleError("not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw IncompatibleError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.get_u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.get_u32();
    std::string name(r.get_bytes(len));
    const std::uint32_t rank = r.get_u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.get_u32();
    const std::vector<float> values = r.get_f32_array(shape_numel(shape));
    out.push_back({std::move(name),
                   Tensor::from_data(std::move(shape),
                                     std::vector<double>(values.begin(), values.end()))});
  }
  if (!r.at_end()) throw IoError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_atomic(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void assign_checkpoint(const std::vector<NamedTensor>& loaded,
                       const std::vector<NamedTensor>& targets) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : loaded) by_name[t.name] = &t.tensor;
  std::string problems;
  for (const auto& t : targets) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      problems += "\n  missing: " + t.name;
    } else if (it->second->shape() != t.tensor.shape()) {
      problems += "\n  shape mismatch: " + t.name + " expected " + shape_str(t.tensor.shape()) +
                  ", found " + shape_str(it->second->shape());
    }
  }
  if (!problems.empty()) throw IncompatibleError("checkpoint does not match model:" + problems);
  for (const auto& t : targets) {
    Tensor dst = t.tensor;
    auto src = by_name.at(t.name)->data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace scg
