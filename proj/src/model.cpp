#include "genrecnn/model.hpp"

#include <cstring>
#include <fstream>

#include "genrecnn/errors.hpp"

namespace genrecnn::model {

const char* layer_name(LayerId id) {
  switch (id) {
    case LayerId::kConv1: return "conv1";
    case LayerId::kPool1: return "pool1";
    case LayerId::kConv2: return "conv2";
    case LayerId::kPool2: return "pool2";
    case LayerId::kFc1: return "fc1";
  }
  throw DomainError("unknown layer id");
}

LayerId layer_from_name(const std::string& name) {
  if (name == "conv1") return LayerId::kConv1;
  if (name == "pool1") return LayerId::kPool1;
  if (name == "conv2") return LayerId::kConv2;
  if (name == "pool2") return LayerId::kPool2;
  if (name == "fc1") return LayerId::kFc1;
  throw DomainError("unknown layer '" + name +
                    "' (expected conv1, pool1, conv2, pool2, or fc1)");
}

namespace {

constexpr char kMagic[4] = {'G', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(std::string("checkpoint: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  const std::uint64_t lo = get_u32(in, what);
  const std::uint64_t hi = get_u32(in, what);
  return lo | (hi << 32);
}

float get_f32(std::istream& in, const char* what) {
  const std::uint32_t u = get_u32(in, what);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void put_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

void get_tensor(std::istream& in, Tensor& t, const char* name) {
  const std::uint32_t rank = get_u32(in, name);
  if (rank > 8) throw FormatError(std::string("checkpoint: bad rank for ") + name);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = get_u32(in, name);
  if (shape != t.shape) {
    throw FormatError(std::string("checkpoint: unexpected shape for ") + name);
  }
  in.read(reinterpret_cast<char*>(t.ptr()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!in) throw FormatError(std::string("checkpoint: truncated data for ") + name);
}

}  // namespace

void save_checkpoint(const GenreCnn& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  // Architecture descriptor.
  put_u32(out, kInputMels);
  put_u32(out, kInputFrames);
  put_u32(out, kNumClasses);
  // Hyperparameters.
  put_f32(out, static_cast<float>(model.hyper.learning_rate));
  put_f32(out, static_cast<float>(model.hyper.momentum));
  put_u32(out, static_cast<std::uint32_t>(model.hyper.batch_size));
  put_f32(out, static_cast<float>(model.hyper.l2_lambda));
  put_f32(out, static_cast<float>(model.hyper.dropout_rate_fc));
  put_u64(out, model.hyper.seed);
  // Training metadata.
  put_u32(out, model.epochs_seen);
  put_f32(out, model.best_val_accuracy);
  // Parameters in fixed order.
  for (const auto* layer : model.layers()) {
    put_tensor(out, layer->weights);
    put_tensor(out, layer->biases);
  }
  if (!out) throw IoError("write failure on " + path.string());
}

GenreCnn load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  }
  if (get_u32(in, "n_mels") != kInputMels ||
      get_u32(in, "n_frames") != kInputFrames ||
      get_u32(in, "n_classes") != kNumClasses) {
    throw FormatError("checkpoint: architecture mismatch");
  }

  GenreCnn model;
  model.hyper.learning_rate = get_f32(in, "learning_rate");
  model.hyper.momentum = get_f32(in, "momentum");
  model.hyper.batch_size = get_u32(in, "batch_size");
  model.hyper.l2_lambda = get_f32(in, "l2_lambda");
  model.hyper.dropout_rate_fc = get_f32(in, "dropout_rate_fc");
  model.hyper.seed = get_u64(in, "seed");
  model.epochs_seen = get_u32(in, "epochs_seen");
  model.best_val_accuracy = get_f32(in, "best_val_accuracy");

  static const char* names[] = {"conv1", "conv2", "fc1", "out"};
  std::size_t li = 0;
  for (auto* layer : model.layers()) {
    get_tensor(in, layer->weights, names[li]);
    get_tensor(in, layer->biases, names[li]);
    ++li;
  }
  // Anything trailing means the file is not a v1 checkpoint.
  char extra;
  in.read(&extra, 1);
  if (!in.eof()) throw FormatError("checkpoint: trailing bytes in " + path.string());
  return model;
}

}  // namespace genrecnn::model
