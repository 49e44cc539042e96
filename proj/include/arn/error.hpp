#pragma once

#include <stdexcept>
#include <string>

namespace arn {

// Every module reports failures through this type. The message carries the
// module name and enough context (patch id, line id, file) to act on.
class Error : public std::runtime_error {
public:
    Error(const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(module), detail_(what) {}

    const std::string& module() const { return module_; }
    // Message without the module prefix, for re-wrapping with more context.
    const std::string& detail() const { return detail_; }

private:
    std::string module_;
    std::string detail_;
};

}  // namespace arn
