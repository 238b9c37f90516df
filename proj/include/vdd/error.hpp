#pragma once

#include <stdexcept>
#include <string>

namespace vdd {

enum class Errc {
  InvalidArgument,
  FileNotFound,
  MalformedFile,
  UnsupportedEncoding,
  Io,
  RateMismatch,
  ShapeMismatch,
  NonFinite,
  CorruptModel,
  VersionMismatch,
  MetadataMismatch,
  UnknownLabel,
  DuplicatePath,
  InsufficientData,
  ScenarioMismatch,
};

const char* errc_name(Errc code) noexcept;

// Every library failure is reported as vdd::Error; the code lets callers
// (and the CLI exit-code mapping) distinguish the cases.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vdd
