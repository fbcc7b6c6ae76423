#pragma once

#include <stdexcept>
#include <string>

namespace flt {

// Numeric values are part of the C API (see flt.h) and must stay stable.
enum class ErrorCode : int {
  kOk = 0,
  kConfig = 1,
  kInput = 2,
  kNumeric = 3,
  kStructure = 4,
  kEncoding = 5,
  kProtocol = 6,
  kIo = 7,
  kInternal = 99,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define FLT_DEFINE_ERROR(Name, Code)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  };

FLT_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
FLT_DEFINE_ERROR(InputError, ErrorCode::kInput)
FLT_DEFINE_ERROR(NumericError, ErrorCode::kNumeric)
FLT_DEFINE_ERROR(StructureError, ErrorCode::kStructure)
FLT_DEFINE_ERROR(EncodingError, ErrorCode::kEncoding)
FLT_DEFINE_ERROR(ProtocolError, ErrorCode::kProtocol)
FLT_DEFINE_ERROR(IoError, ErrorCode::kIo)

#undef FLT_DEFINE_ERROR

}  // namespace flt
