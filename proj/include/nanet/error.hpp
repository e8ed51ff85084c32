#pragma once

#include <stdexcept>
#include <string>

namespace nanet {

/// Base of every failure raised by the library. `name()` is the stable
/// identifier the CLI prints so scripts can match on it.
class Error : public std::runtime_error {
public:
  Error(std::string name, const std::string &what)
      : std::runtime_error(what), name_(std::move(name)) {}
  const std::string &name() const noexcept { return name_; }

private:
  std::string name_;
};

#define NANET_DEFINE_ERROR(Type)                                               \
  class Type : public Error {                                                  \
  public:                                                                      \
    explicit Type(const std::string &what) : Error(#Type, what) {}             \
  }

NANET_DEFINE_ERROR(NonLetterInput);
NANET_DEFINE_ERROR(UnknownCode);
NANET_DEFINE_ERROR(SpecOverflow);
NANET_DEFINE_ERROR(InvalidSpec);
NANET_DEFINE_ERROR(IoFailure);
NANET_DEFINE_ERROR(ShapeMismatch);
NANET_DEFINE_ERROR(DisconnectedGraph);
NANET_DEFINE_ERROR(NonFiniteValue);
NANET_DEFINE_ERROR(EmptyMatrix);
NANET_DEFINE_ERROR(MissingSplit);
NANET_DEFINE_ERROR(VersionMismatch);
NANET_DEFINE_ERROR(ChecksumMismatch);
NANET_DEFINE_ERROR(InvalidCheckpoint);
NANET_DEFINE_ERROR(InvalidLabel);

#undef NANET_DEFINE_ERROR

} // namespace nanet
