#include "gsmooth/data_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gsmooth {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b,
                          std::size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(off) + " (need 4 more bytes)");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

template <typename T>
void push_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const std::vector<std::uint8_t>& b, std::size_t off,
          const std::string& path) {
  if (off + sizeof(T) > b.size())
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(off));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

void validate_dataset(const Dataset& ds, const std::string& where) {
  if (ds.images.size() != ds.labels.size())
    throw FormatError(where + ": " + std::to_string(ds.images.size()) +
                      " images vs " + std::to_string(ds.labels.size()) +
                      " labels");
  for (int l : ds.labels)
    if (l < 0 || l >= ds.num_classes)
      throw FormatError(where + ": label " + std::to_string(l) +
                        " outside [0," + std::to_string(ds.num_classes) +
                        ")");
}

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  const auto ib = read_file(images_path);
  const auto lb = read_file(labels_path);

  const std::uint32_t imagic = read_u32_be(ib, 0, images_path);
  if (imagic != 0x00000803u) {
    std::ostringstream os;
    os << images_path << ": bad image magic at byte offset 0: expected 0x803, found 0x"
       << std::hex << imagic;
    throw FormatError(os.str());
  }
  const std::uint32_t lmagic = read_u32_be(lb, 0, labels_path);
  if (lmagic != 0x00000801u) {
    std::ostringstream os;
    os << labels_path << ": bad label magic at byte offset 0: expected 0x801, found 0x"
       << std::hex << lmagic;
    throw FormatError(os.str());
  }

  const std::uint32_t count = read_u32_be(ib, 4, images_path);
  const std::uint32_t rows = read_u32_be(ib, 8, images_path);
  const std::uint32_t cols = read_u32_be(ib, 12, images_path);
  const std::uint32_t lcount = read_u32_be(lb, 4, labels_path);
  if (count != lcount)
    throw FormatError("IDX count mismatch: " + images_path + " has " +
                      std::to_string(count) + " images but " + labels_path +
                      " has " + std::to_string(lcount) + " labels");

  const std::size_t need = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (ib.size() < need)
    throw FormatError(images_path + ": truncated payload at byte offset " +
                      std::to_string(ib.size()) + ", expected " +
                      std::to_string(need) + " bytes");
  if (lb.size() < 8 + count)
    throw FormatError(labels_path + ": truncated payload at byte offset " +
                      std::to_string(lb.size()) + ", expected " +
                      std::to_string(8 + count) + " bytes");

  Dataset ds;
  ds.num_classes = 10;
  ds.provenance = "mnist-idx:" + images_path;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  std::size_t off = 16;
  for (std::uint32_t i = 0; i < count; ++i) {
    Image im = make_image(static_cast<int>(rows), static_cast<int>(cols), 1);
    for (std::uint32_t p = 0; p < rows * cols; ++p)
      im.pixels[p] = static_cast<float>(ib[off + p]) / 255.0f;
    off += static_cast<std::size_t>(rows) * cols;
    ds.images.push_back(std::move(im));
    const int label = lb[8 + i];
    if (label > 9)
      throw FormatError(labels_path + ": label " + std::to_string(label) +
                        " out of range at byte offset " +
                        std::to_string(8 + i));
    ds.labels.push_back(label);
  }
  return ds;
}

namespace {

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

}  // namespace

void save_dataset_idx(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
  validate_dataset(ds, "save_dataset_idx");
  if (ds.images.empty())
    throw FormatError("save_dataset_idx: empty dataset");
  const Image& first = ds.images.front();
  if (first.channels != 1)
    throw FormatError("save_dataset_idx: IDX stores single-channel images");
  for (int l : ds.labels)
    if (l > 255)
      throw FormatError("save_dataset_idx: label exceeds the u8 range");

  std::vector<std::uint8_t> ib;
  ib.reserve(16 + ds.images.size() * first.pixels.size());
  push_u32_be(ib, 0x00000803u);
  push_u32_be(ib, static_cast<std::uint32_t>(ds.images.size()));
  push_u32_be(ib, static_cast<std::uint32_t>(first.height));
  push_u32_be(ib, static_cast<std::uint32_t>(first.width));
  for (const Image& im : ds.images) {
    if (im.height != first.height || im.width != first.width ||
        im.channels != 1)
      throw FormatError("save_dataset_idx: ragged image sizes");
    for (Eigen::Index p = 0; p < im.pixels.size(); ++p) {
      const float v = std::min(1.0f, std::max(0.0f, im.pixels[p]));
      ib.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  write_file(images_path, ib);

  std::vector<std::uint8_t> lb;
  lb.reserve(8 + ds.labels.size());
  push_u32_be(lb, 0x00000801u);
  push_u32_be(lb, static_cast<std::uint32_t>(ds.labels.size()));
  for (int l : ds.labels) lb.push_back(static_cast<std::uint8_t>(l));
  write_file(labels_path, lb);
}

namespace {

// Signed distance-ish membership tests for the four shape classes, in unit
// coordinates relative to the shape center and scale.
bool inside_shape(int cls, double ux, double uy) {
  switch (cls) {
    case 0:  // disk
      return ux * ux + uy * uy <= 1.0;
    case 1:  // square
      return std::fabs(ux) <= 0.82 && std::fabs(uy) <= 0.82;
    case 2:  // triangle (upward)
      return uy >= -0.75 && uy <= 0.85 &&
             std::fabs(ux) <= 0.62 * (0.85 - uy);
    case 3:  // cross
      return (std::fabs(ux) <= 0.32 && std::fabs(uy) <= 1.0) ||
             (std::fabs(uy) <= 0.32 && std::fabs(ux) <= 1.0);
    default:
      return false;
  }
}

}  // namespace

Dataset generate_synthetic_shapes(int count, int size, int classes,
                                  std::uint64_t seed) {
  if (size != 16 && size != 28 && size != 32)
    throw std::invalid_argument("shapes size must be 16, 28 or 32");
  if (classes < 1 || classes > 4)
    throw std::invalid_argument("shapes supports 1..4 classes");
  if (count < 1 || count % classes != 0)
    throw std::invalid_argument(
        "shapes count must be a positive multiple of the class count");

  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> jitter(-0.14, 0.14);
  std::uniform_real_distribution<double> scale(0.26, 0.38);

  Dataset ds;
  ds.num_classes = classes;
  ds.provenance = "synthetic-shapes seed=" + std::to_string(seed);
  ds.images.reserve(count);
  ds.labels.reserve(count);

  const int ss = 4;  // supersampling factor for anti-aliased edges
  const float bg = 0.1f, fg = 0.9f;
  for (int i = 0; i < count; ++i) {
    const int cls = i % classes;
    const double cx = size * (0.5 + jitter(rng));
    const double cy = size * (0.5 + jitter(rng));
    const double r = size * scale(rng);
    Image im = make_image(size, size, 1, bg);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        int hits = 0;
        for (int sy = 0; sy < ss; ++sy)
          for (int sx = 0; sx < ss; ++sx) {
            const double px = x + (sx + 0.5) / ss;
            const double py = y + (sy + 0.5) / ss;
            if (inside_shape(cls, (px - cx) / r, (py - cy) / r)) ++hits;
          }
        const float cover = static_cast<float>(hits) / (ss * ss);
        im.at(0, y, x) = bg + (fg - bg) * cover;
      }
    ds.images.push_back(std::move(im));
    ds.labels.push_back(cls);
  }

  // Shuffle while keeping the (image, label) pairing; balance is untouched.
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset shuffled;
  shuffled.num_classes = ds.num_classes;
  shuffled.provenance = ds.provenance;
  for (int idx : order) {
    shuffled.images.push_back(std::move(ds.images[idx]));
    shuffled.labels.push_back(ds.labels[idx]);
  }
  return shuffled;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, int first_count,
                                          std::uint64_t seed) {
  validate_dataset(ds, "split_dataset");
  const int n = static_cast<int>(ds.images.size());
  if (first_count < 0 || first_count > n)
    throw std::invalid_argument("split size out of range");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 17);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset a, b;
  a.num_classes = b.num_classes = ds.num_classes;
  a.provenance = b.provenance = ds.provenance;
  a.split = "train";
  b.split = "val";
  for (int i = 0; i < n; ++i) {
    Dataset& dst = i < first_count ? a : b;
    dst.images.push_back(ds.images[order[i]]);
    dst.labels.push_back(ds.labels[order[i]]);
  }
  return {std::move(a), std::move(b)};
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const ParamList& params, const std::string& path) {
  std::vector<std::uint8_t> body;  // everything after the magic, pre-CRC
  push_le<std::uint32_t>(body, kCheckpointVersion);
  push_le<std::uint32_t>(body, static_cast<std::uint32_t>(params.size()));
  for (const NamedParam& p : params) {
    if (p.name.size() > 0xffff)
      throw FormatError("checkpoint tensor name too long: " + p.name);
    push_le<std::uint16_t>(body, static_cast<std::uint16_t>(p.name.size()));
    body.insert(body.end(), p.name.begin(), p.name.end());
    const std::vector<int>& dims = p.tensor.dims();
    if (dims.size() > 0xff)
      throw FormatError("checkpoint tensor rank too large");
    body.push_back(static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) push_le<std::uint32_t>(body, static_cast<std::uint32_t>(d));
    const ArrayF& data = p.tensor.values();
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      std::uint32_t bits;
      const float f = data[i];
      std::memcpy(&bits, &f, 4);
      push_le<std::uint32_t>(body, bits);
    }
  }
  std::vector<std::uint8_t> file;
  file.insert(file.end(), {'G', 'S', 'M', '1'});
  file.insert(file.end(), body.begin(), body.end());
  push_le<std::uint32_t>(file, crc32(body.data(), body.size()));
  write_file(path, file);
}

std::vector<LoadedTensor> load_checkpoint(const std::string& path) {
  const auto file = read_file(path);
  if (file.size() < 16 || std::memcmp(file.data(), "GSM1", 4) != 0)
    throw FormatError(path + ": not a GSM1 checkpoint (bad magic at byte offset 0)");
  const std::size_t body_len = file.size() - 8;
  const std::uint32_t want_crc = read_le<std::uint32_t>(file, 4 + body_len, path);
  const std::uint32_t got_crc = crc32(file.data() + 4, body_len);
  if (want_crc != got_crc)
    throw FormatError(path + ": CRC mismatch (payload corrupted)");

  std::size_t off = 4;
  const std::uint32_t version = read_le<std::uint32_t>(file, off, path);
  off += 4;
  if (version != kCheckpointVersion)
    throw FormatError(path + ": checkpoint version " +
                      std::to_string(version) + " unsupported; this build reads version " +
                      std::to_string(kCheckpointVersion) +
                      " (re-save the model with the current tools)");
  const std::uint32_t count = read_le<std::uint32_t>(file, off, path);
  off += 4;

  std::vector<LoadedTensor> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = read_le<std::uint16_t>(file, off, path);
    off += 2;
    if (off + name_len > file.size())
      throw FormatError(path + ": truncated name at byte offset " +
                        std::to_string(off));
    LoadedTensor lt;
    lt.name.assign(reinterpret_cast<const char*>(file.data() + off), name_len);
    off += name_len;
    if (off >= file.size())
      throw FormatError(path + ": truncated rank at byte offset " +
                        std::to_string(off));
    const std::uint8_t rank = file[off++];
    Eigen::Index total = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_le<std::uint32_t>(file, off, path);
      off += 4;
      lt.dims.push_back(static_cast<int>(dim));
      total *= dim;
    }
    lt.data.resize(total);
    for (Eigen::Index i = 0; i < total; ++i) {
      const std::uint32_t bits = read_le<std::uint32_t>(file, off, path);
      off += 4;
      float f;
      std::memcpy(&f, &bits, 4);
      lt.data[i] = f;
    }
    out.push_back(std::move(lt));
  }
  return out;
}

void load_checkpoint_into(const std::string& path, ParamList& params) {
  const auto loaded = load_checkpoint(path);
  if (loaded.size() != params.size())
    throw FormatError(path + ": checkpoint has " +
                      std::to_string(loaded.size()) + " tensors, model needs " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const LoadedTensor& lt = loaded[i];
    NamedParam& p = params[i];
    if (lt.name != p.name)
      throw FormatError(path + ": tensor '" + lt.name +
                        "' does not match model parameter '" + p.name + "'");
    if (lt.dims != p.tensor.dims())
      throw FormatError(path + ": dims " + dims_to_string(lt.dims) +
                        " for '" + lt.name + "' do not match model " +
                        dims_to_string(p.tensor.dims()));
    p.tensor.values() = lt.data;
  }
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  auto emit = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(row[i]);
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw FormatError("CSV row width " + std::to_string(row.size()) +
                        " does not match header width " +
                        std::to_string(header.size()));
    emit(row);
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, row_open = false;
  char c;
  while (in.get(c)) {
    row_open = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get(c);
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      row_open = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw FormatError(path + ": unterminated quoted CSV field");
  if (row_open) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_image(const Image& im, const std::string& path) {
  validate_image(im, "write_image");
  if (ends_with(path, ".f32")) {
    std::vector<std::uint8_t> file;
    push_le<std::uint32_t>(file, static_cast<std::uint32_t>(im.height));
    push_le<std::uint32_t>(file, static_cast<std::uint32_t>(im.width));
    push_le<std::uint32_t>(file, static_cast<std::uint32_t>(im.channels));
    for (Eigen::Index i = 0; i < im.pixels.size(); ++i) {
      std::uint32_t bits;
      const float f = im.pixels[i];
      std::memcpy(&bits, &f, 4);
      push_le<std::uint32_t>(file, bits);
    }
    write_file(path, file);
    return;
  }
  const bool pgm = ends_with(path, ".pgm");
  const bool ppm = ends_with(path, ".ppm");
  if (!pgm && !ppm)
    throw FormatError("unsupported image extension on '" + path +
                      "' (use .pgm, .ppm or .f32)");
  if (pgm && im.channels != 1)
    throw FormatError("PGM requires 1 channel, image has " +
                      std::to_string(im.channels));
  if (ppm && im.channels != 3)
    throw FormatError("PPM requires 3 channels, image has " +
                      std::to_string(im.channels));
  std::ostringstream head;
  head << (pgm ? "P5" : "P6") << "\n"
       << im.width << " " << im.height << "\n255\n";
  const std::string head_str = head.str();
  std::vector<std::uint8_t> file(head_str.begin(), head_str.end());
  // PGM/PPM are pixel-interleaved; internal layout is planar.
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c)
        file.push_back(static_cast<std::uint8_t>(
            std::lround(std::clamp(im.at(c, y, x), 0.0f, 1.0f) * 255.0f)));
  write_file(path, file);
}

Image read_image(const std::string& path) {
  if (ends_with(path, ".f32")) {
    const auto file = read_file(path);
    const auto h = static_cast<int>(read_le<std::uint32_t>(file, 0, path));
    const auto w = static_cast<int>(read_le<std::uint32_t>(file, 4, path));
    const auto c = static_cast<int>(read_le<std::uint32_t>(file, 8, path));
    Image im = make_image(h, w, c);
    if (file.size() != 12 + 4 * static_cast<std::size_t>(im.pixels.size()))
      throw FormatError(path + ": payload size mismatch at byte offset " +
                        std::to_string(file.size()));
    for (Eigen::Index i = 0; i < im.pixels.size(); ++i) {
      const std::uint32_t bits =
          read_le<std::uint32_t>(file, 12 + 4 * static_cast<std::size_t>(i), path);
      float f;
      std::memcpy(&f, &bits, 4);
      im.pixels[i] = f;
    }
    return im;
  }
  const auto file = read_file(path);
  if (file.size() < 2 || file[0] != 'P' || (file[1] != '5' && file[1] != '6'))
    throw FormatError(path + ": not a binary PGM/PPM (bad magic at byte offset 0)");
  const int channels = file[1] == '5' ? 1 : 3;
  std::size_t off = 2;
  auto next_int = [&]() {
    // Skip whitespace and '#' comments, then parse a decimal integer.
    while (off < file.size()) {
      if (std::isspace(file[off])) {
        ++off;
      } else if (file[off] == '#') {
        while (off < file.size() && file[off] != '\n') ++off;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (off < file.size() && std::isdigit(file[off])) {
      v = v * 10 + (file[off++] - '0');
      any = true;
    }
    if (!any)
      throw FormatError(path + ": expected integer at byte offset " +
                        std::to_string(off));
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255)
    throw FormatError(path + ": only maxval 255 supported, found " +
                      std::to_string(maxval));
  ++off;  // single whitespace byte after maxval
  Image im = make_image(static_cast<int>(h), static_cast<int>(w), channels);
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (file.size() < off + need)
    throw FormatError(path + ": truncated pixel payload at byte offset " +
                      std::to_string(file.size()) + ", expected " +
                      std::to_string(off + need) + " bytes");
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < channels; ++c)
        im.at(c, y, x) = static_cast<float>(file[off++]) / 255.0f;
  return im;
}

}  // namespace gsmooth
