// Error taxonomy. Every failure carries a stable machine-readable code that
// survives up to the CLI's JSON error output.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace chd {

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define CHD_DEFINE_ERROR(Name)                                            \
    struct Name : Error {                                                 \
        explicit Name(const std::string& w) : Error(#Name, w) {}          \
    }

CHD_DEFINE_ERROR(NonConvergence);
CHD_DEFINE_ERROR(QuadratureFailure);
CHD_DEFINE_ERROR(NonPositiveConductivity);
CHD_DEFINE_ERROR(CgBreakdown);
CHD_DEFINE_ERROR(CgNoConvergence);
CHD_DEFINE_ERROR(NewtonNoConvergence);
CHD_DEFINE_ERROR(IndefiniteJacobian);
CHD_DEFINE_ERROR(PicardNoConvergence);
CHD_DEFINE_ERROR(LostPositivity);
CHD_DEFINE_ERROR(HistoryGap);
CHD_DEFINE_ERROR(InvalidScenario);
CHD_DEFINE_ERROR(AuditFailure);
CHD_DEFINE_ERROR(ParseError);
CHD_DEFINE_ERROR(ValidationError);
CHD_DEFINE_ERROR(FormatError);

#undef CHD_DEFINE_ERROR

}  // namespace chd
