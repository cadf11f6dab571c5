// Weights file format (UTF-8 text, LF line endings):
//
//   sevit-weights 1
//   variant <name>
//   steps <int>
//   input_channels <int>
//   embed <int>
//   se_ratio <int>
//   hidden <int>
//   n_classes <int>
//   norm_eps <hexfloat>
//   tensor <name> <rows> <cols>      repeated, in registry order
//   <cols hexfloats>                 one line per row
//   end
//
// Hex-float values make save/load bit-exact.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "sevit/model.hpp"

namespace sevit {
namespace {

constexpr const char* kMagic = "sevit-weights";
constexpr int kVersion = 1;

std::string hex(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

double parse_double(const std::string& token, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size()) {
    throw DataError("weights file: bad number '" + token + "' in " + where);
  }
  return v;
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::istringstream next(const std::string& expecting) {
    std::string line;
    if (!std::getline(is_, line)) {
      throw DataError("weights file: unexpected end of file, expected " + expecting);
    }
    ++line_no_;
    return std::istringstream(line);
  }

  std::string where() const { return "line " + std::to_string(line_no_); }

 private:
  std::istream& is_;
  int line_no_ = 0;
};

template <typename T>
T read_field(LineReader& in, const std::string& key) {
  auto ls = in.next(key);
  std::string k;
  std::string value;
  ls >> k >> value;
  if (k != key) throw DataError("weights file: expected '" + key + "' at " + in.where());
  if constexpr (std::is_same_v<T, std::string>) {
    return value;
  } else if constexpr (std::is_same_v<T, double>) {
    return parse_double(value, in.where());
  } else {
    return static_cast<T>(std::stoll(value));
  }
}

}  // namespace

void save_model(const Model& m, std::ostream& os) {
  const ModelSpec& s = m.spec();
  os << kMagic << ' ' << kVersion << '\n';
  os << "variant " << variant_name(s.variant) << '\n';
  os << "steps " << s.steps << '\n';
  os << "input_channels " << s.input_channels << '\n';
  os << "embed " << s.embed << '\n';
  os << "se_ratio " << s.se_ratio << '\n';
  os << "hidden " << s.hidden << '\n';
  os << "n_classes " << s.n_classes << '\n';
  os << "norm_eps " << hex(s.norm_eps) << '\n';
  for_each_param(m.params(), [&](const char* name, const auto& t) {
    os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (Index r = 0; r < t.rows(); ++r) {
      for (Index c = 0; c < t.cols(); ++c) {
        if (c) os << ' ';
        os << hex(t(r, c));
      }
      os << '\n';
    }
  });
  os << "end\n";
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write weights file " + path);
  save_model(m, os);
  if (!os) throw DataError("failed writing weights file " + path);
}

Model load_model(std::istream& is) {
  LineReader in(is);
  {
    auto ls = in.next("header");
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic) throw DataError("weights file: missing '" + std::string(kMagic) + "' header");
    if (version != kVersion) {
      throw DataError("weights file: unsupported version " + std::to_string(version));
    }
  }
  ModelSpec s;
  s.variant = parse_variant(read_field<std::string>(in, "variant"));
  s.steps = read_field<Index>(in, "steps");
  s.input_channels = read_field<Index>(in, "input_channels");
  s.embed = read_field<Index>(in, "embed");
  s.se_ratio = read_field<Index>(in, "se_ratio");
  s.hidden = read_field<Index>(in, "hidden");
  s.n_classes = read_field<Index>(in, "n_classes");
  s.norm_eps = read_field<double>(in, "norm_eps");
  s.validate();

  // Build for shapes, then overwrite every tensor.
  Rng shape_only(0);
  Model m = build_model(s, shape_only);
  for_each_param(m.params(), [&](const char* name, auto& t) {
    auto ls = in.next(std::string("tensor ") + name);
    std::string tag, got_name;
    Index rows = -1, cols = -1;
    ls >> tag >> got_name >> rows >> cols;
    if (tag != "tensor" || got_name != name) {
      throw DataError("weights file: expected tensor " + std::string(name) + " at " + in.where());
    }
    if (rows != t.rows() || cols != t.cols()) {
      throw ShapeError("weights file: tensor " + std::string(name) + " is " + std::to_string(rows) +
                       " x " + std::to_string(cols) + ", spec requires " + shape_of(t));
    }
    for (Index r = 0; r < rows; ++r) {
      auto row = in.next(std::string("values of ") + name);
      std::string token;
      for (Index c = 0; c < cols; ++c) {
        if (!(row >> token)) {
          throw DataError("weights file: short row in " + std::string(name) + " at " + in.where());
        }
        t(r, c) = parse_double(token, in.where());
      }
    }
  });
  m.params().vit.norm.eps = s.norm_eps;
  auto tail = in.next("end");
  std::string end;
  tail >> end;
  if (end != "end") throw DataError("weights file: expected 'end' at " + in.where());
  return m;
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open weights file " + path);
  return load_model(is);
}

}  // namespace sevit
