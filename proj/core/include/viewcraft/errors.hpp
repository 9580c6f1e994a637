#pragma once

#include <stdexcept>
#include <string>

namespace viewcraft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VIEWCRAFT_DEFINE_ERROR(Name)      \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

/// A perturbation whose norm is (numerically) zero cannot be scaled onto the
/// budget sphere. Usually means the generator output died.
VIEWCRAFT_DEFINE_ERROR(DegenerateNorm);
VIEWCRAFT_DEFINE_ERROR(ShapeMismatch);
VIEWCRAFT_DEFINE_ERROR(ConfigInvalid);
VIEWCRAFT_DEFINE_ERROR(ConfigParseError);
VIEWCRAFT_DEFINE_ERROR(NotNormalized);
VIEWCRAFT_DEFINE_ERROR(IndexOutOfRange);
VIEWCRAFT_DEFINE_ERROR(EmptyInput);
VIEWCRAFT_DEFINE_ERROR(MaskTooLarge);
VIEWCRAFT_DEFINE_ERROR(WindowOutOfBounds);
VIEWCRAFT_DEFINE_ERROR(DatasetTooSmall);
VIEWCRAFT_DEFINE_ERROR(ZeroVariance);
VIEWCRAFT_DEFINE_ERROR(NonFiniteLoss);
VIEWCRAFT_DEFINE_ERROR(IOFailure);
VIEWCRAFT_DEFINE_ERROR(CheckpointMismatch);
VIEWCRAFT_DEFINE_ERROR(UnknownSubject);
VIEWCRAFT_DEFINE_ERROR(KTooLarge);

#undef VIEWCRAFT_DEFINE_ERROR

}  // namespace viewcraft
