#pragma once

#include <string>

namespace exomix {

inline const std::string label_exogenous = "exogenous";
inline const std::string label_endogenous = "endogenous";

inline const std::string label_control = "Control";
inline const std::string label_hilo = "Hi-Lo";
inline const std::string label_edlp = "EDLP";

} // namespace exomix
