#include "sluadv/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace sluadv::nn {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw CheckpointError("cannot format value");
  out.append(buf, end);
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  std::string_view next() {
    if (pos_ >= text_.size()) throw CheckpointError("unexpected end of checkpoint");
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    std::string_view line = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::string_view expect_prefix(LineReader& in, std::string_view line, std::string_view prefix) {
  if (!line.starts_with(prefix)) in.fail("expected '" + std::string(prefix) + "'");
  return line.substr(prefix.size());
}

template <typename T>
T parse_number(LineReader& in, std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) in.fail("invalid number '" + std::string(s) + "'");
  return v;
}

}  // namespace

Checkpoint capture(std::span<const ParamGroup> groups, std::uint64_t seed, std::int64_t step) {
  Checkpoint cp;
  cp.seed = seed;
  cp.step = step;
  for (const auto& g : groups) {
    for (const auto& t : g.tensors) cp.tensors.push_back({g.name, t.name, t.param->value});
  }
  return cp;
}

void restore(std::span<const ParamGroup> groups, const Checkpoint& checkpoint) {
  std::map<std::pair<std::string, std::string>, const TensorRecord*> index;
  for (const auto& r : checkpoint.tensors) index[{r.group, r.name}] = &r;
  for (const auto& g : groups) {
    for (const auto& t : g.tensors) {
      auto it = index.find({g.name, t.name});
      if (it == index.end()) throw CheckpointError("checkpoint lacks tensor " + g.name + "/" + t.name);
      const Matrix& v = it->second->value;
      if (v.rows() != t.param->value.rows() || v.cols() != t.param->value.cols()) {
        throw CheckpointError("shape mismatch for tensor " + g.name + "/" + t.name);
      }
      t.param->value = v;
    }
  }
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.metadata.find('\n') != std::string::npos) throw CheckpointError("metadata must be one line");
  std::string out;
  out += kCheckpointMagic;
  out += "\nseed " + std::to_string(checkpoint.seed);
  out += "\nstep " + std::to_string(checkpoint.step);
  out += "\nmeta " + checkpoint.metadata + "\n";
  for (const auto& r : checkpoint.tensors) {
    if (r.group.find_first_of(" \n") != std::string::npos || r.name.find_first_of(" \n") != std::string::npos) {
      throw CheckpointError("tensor names must not contain spaces");
    }
    out += "tensor " + r.group + " " + r.name + " " + std::to_string(r.value.rows()) + " " +
           std::to_string(r.value.cols()) + "\n";
    for (Eigen::Index i = 0; i < r.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.value.cols(); ++j) {
        if (j > 0) out += ' ';
        append_double(out, r.value(i, j));
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  LineReader in(text);
  Checkpoint cp;
  if (in.next() != kCheckpointMagic) in.fail("missing SLUADV1 header");
  {
    auto line = in.next();
    cp.seed = parse_number<std::uint64_t>(in, expect_prefix(in, line, "seed "));
  }
  {
    auto line = in.next();
    cp.step = parse_number<std::int64_t>(in, expect_prefix(in, line, "step "));
  }
  {
    auto line = in.next();
    cp.metadata = std::string(expect_prefix(in, line, "meta "));
  }
  for (;;) {
    const std::string_view line = in.next();
    if (line == "end") break;
    std::istringstream header(std::string(expect_prefix(in, line, "tensor ")));
    TensorRecord r;
    Eigen::Index rows = 0, cols = 0;
    if (!(header >> r.group >> r.name >> rows >> cols) || rows < 0 || cols < 0) in.fail("malformed tensor header");
    r.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      std::string_view row = in.next();
      for (Eigen::Index j = 0; j < cols; ++j) {
        const std::size_t space = row.find(' ');
        const std::string_view item = row.substr(0, space);
        r.value(i, j) = parse_number<double>(in, item);
        row = space == std::string_view::npos ? std::string_view{} : row.substr(space + 1);
      }
      if (!row.empty()) in.fail("too many values in row");
    }
    cp.tensors.push_back(std::move(r));
  }
  return cp;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << serialize_checkpoint(checkpoint);
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace sluadv::nn
