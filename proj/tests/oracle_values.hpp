// Generated by tests/oracles/generate.py. Do not edit.
#ifndef ORCA_ORACLE_VALUES_HPP
#define ORCA_ORACLE_VALUES_HPP

namespace orca::oracle {
inline constexpr double kLjungBox_white = 2.450784867521146;
inline constexpr double kLjungBox_ar1 = 7133.2288032117185;
inline constexpr double kAr1Phi = 0.4873671479921606;
inline constexpr double kVarB00 = 0.893266287644543;
inline constexpr double kVarB01 = -0.0012949585526425215;
inline constexpr double kVarB10 = 0.008764246494408956;
inline constexpr double kVarB11 = -0.3001923596201816;
inline constexpr double kOcsvmRho = 0.15285993843969542;
inline constexpr double kOcsvmOutsideFraction = 0.10666666666666667;
inline constexpr double kOcsvmProbe0 = 0.15355358565011878;
inline constexpr double kOcsvmProbe1 = 0.15680448482606826;
inline constexpr double kOcsvmProbe2 = 0.14374577360158663;
inline constexpr double kOcsvmProbe3 = 0.025982163947497482;
inline constexpr double kRlsPhi0 = 0.8232852571705548;
inline constexpr double kRlsPhi1 = 0.15845037122660136;
inline constexpr double kRlsInterceptPhi0 = 0.6680027350165184;
inline constexpr double kRlsInterceptPhi1 = -0.000281741836901217;
inline constexpr double kRlsInterceptC = 0.16236311512410506;
inline constexpr double kToyOptimum = 11.407305428648314;
}  // namespace orca::oracle

#endif  // ORCA_ORACLE_VALUES_HPP
