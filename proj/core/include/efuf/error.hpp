#pragma once

#include <stdexcept>
#include <string>

namespace efuf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EFUF_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  };

EFUF_DEFINE_ERROR(ConfigError)
EFUF_DEFINE_ERROR(IoError)
EFUF_DEFINE_ERROR(BackendError)
EFUF_DEFINE_ERROR(DomainError)
EFUF_DEFINE_ERROR(ShapeError)
EFUF_DEFINE_ERROR(ExtractionError)
EFUF_DEFINE_ERROR(CurationError)
EFUF_DEFINE_ERROR(TrainingError)

#undef EFUF_DEFINE_ERROR

}  // namespace efuf
