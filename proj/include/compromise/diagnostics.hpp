#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace compromise {

/// Raised for malformed input files, bad arguments and contract violations.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(std::string_view)>;

/// Routes a non-fatal warning to the installed handler (stderr by default).
void warn(std::string_view message);

/// Installs a handler and returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

/// Restores the previous handler on destruction; collects warnings meanwhile.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
    WarningHandler previous_;
};

}  // namespace compromise
