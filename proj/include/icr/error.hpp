#pragma once
// Exception types. Each carries a stable kind string so the CLI can map
// failures to exit codes and messages without string matching.

#include <stdexcept>
#include <string>

namespace icr {

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct InvalidArgs : Error {
    explicit InvalidArgs(const std::string& w) : Error("InvalidArgs", w) {}
};
struct CapacityExceeded : Error {
    explicit CapacityExceeded(const std::string& w) : Error("CapacityExceeded", w) {}
};
struct Unsupported : Error {
    explicit Unsupported(const std::string& w) : Error("Unsupported", w) {}
};
struct LengthExceeded : Error {
    explicit LengthExceeded(const std::string& w) : Error("LengthExceeded", w) {}
};
struct InvalidTemperature : Error {
    explicit InvalidTemperature(const std::string& w) : Error("InvalidTemperature", w) {}
};
struct NonFinite : Error {
    explicit NonFinite(const std::string& w) : Error("NonFinite", w) {}
};
struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& w) : Error("InvalidConfig", w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error("IoError", w) {}
};

}  // namespace icr
