#pragma once

#include <stdexcept>
#include <string>

namespace capreward {

// Every library failure derives from Error and carries a stable code string
// that the service and CLI surface verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define CAPREWARD_DEFINE_ERROR(Name)                                         \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    }

CAPREWARD_DEFINE_ERROR(DimensionMismatch);
CAPREWARD_DEFINE_ERROR(ZeroVector);
CAPREWARD_DEFINE_ERROR(TooFewQueries);
CAPREWARD_DEFINE_ERROR(NonFiniteValue);
CAPREWARD_DEFINE_ERROR(PreconditionError);
CAPREWARD_DEFINE_ERROR(MalformedModelOutput);
CAPREWARD_DEFINE_ERROR(ConfigError);
CAPREWARD_DEFINE_ERROR(AllGeneratorsFailed);
CAPREWARD_DEFINE_ERROR(IoError);
CAPREWARD_DEFINE_ERROR(EmptyQuerySet);
CAPREWARD_DEFINE_ERROR(RangeError);
CAPREWARD_DEFINE_ERROR(EmptyGroup);
CAPREWARD_DEFINE_ERROR(EmptyStats);
CAPREWARD_DEFINE_ERROR(RaggedStats);
CAPREWARD_DEFINE_ERROR(KTooLarge);
CAPREWARD_DEFINE_ERROR(UnknownSample);
CAPREWARD_DEFINE_ERROR(DatasetLoadError);
CAPREWARD_DEFINE_ERROR(BindError);

#undef CAPREWARD_DEFINE_ERROR

// Remote call failure after the retry budget is spent.
class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts)
        : Error("TransportError", message), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace capreward
