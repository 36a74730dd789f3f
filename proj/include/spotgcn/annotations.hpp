#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spotgcn/common.hpp"

namespace spotgcn {

enum class ExprType { macro = 0, micro = 1 };

inline const char* expr_type_name(ExprType t) { return t == ExprType::macro ? "macro" : "micro"; }

inline ExprType parse_expr_type(const std::string& s) {
  if (s == "macro") return ExprType::macro;
  if (s == "micro") return ExprType::micro;
  raise(Errc::data, "unknown expression type: " + s);
}

struct AnnotationClip {
  std::string subject;
  std::string video;
  ExprType type = ExprType::macro;
  // Frame indices, 0-based; apex may be -1 when unannotated.
  std::int64_t onset = 0, apex = -1, offset = 0;
};

inline void validate_clip(const AnnotationClip& c) {
  require(c.onset <= c.offset, Errc::data, "annotation has onset > offset");
  if (c.apex >= 0)
    require(c.onset <= c.apex && c.apex <= c.offset, Errc::data, "annotation apex outside clip");
}

inline void write_annotations_csv(const std::string& path, const std::vector<AnnotationClip>& clips) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot open annotations for writing: " + path);
  out << "subject,video,type,onset,apex,offset\n";
  for (const auto& c : clips)
    out << c.subject << ',' << c.video << ',' << expr_type_name(c.type) << ',' << c.onset << ','
        << c.apex << ',' << c.offset << "\n";
  require(out.good(), Errc::io, "short write to annotations file");
}

inline std::vector<AnnotationClip> read_annotations_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "annotations not found: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::data, "empty annotations file");
  std::vector<AnnotationClip> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string subject, video, type, onset, apex, offset;
    const bool ok = static_cast<bool>(std::getline(ss, subject, ',')) &&
                    static_cast<bool>(std::getline(ss, video, ',')) &&
                    static_cast<bool>(std::getline(ss, type, ',')) &&
                    static_cast<bool>(std::getline(ss, onset, ',')) &&
                    static_cast<bool>(std::getline(ss, apex, ',')) &&
                    static_cast<bool>(std::getline(ss, offset, ','));
    require(ok, Errc::data, "malformed annotations row: " + line);
    AnnotationClip c;
    c.subject = subject;
    c.video = video;
    c.type = parse_expr_type(type);
    c.onset = std::strtoll(onset.c_str(), nullptr, 10);
    c.apex = std::strtoll(apex.c_str(), nullptr, 10);
    c.offset = std::strtoll(offset.c_str(), nullptr, 10);
    validate_clip(c);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace spotgcn
