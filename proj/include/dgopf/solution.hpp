// Solution records shared between the OPF builders, the distributed engines
// and the power-flow validator.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "dgopf/inverter.hpp"

namespace dgopf {

struct LineFlowRecord {
  BusId from_bus;
  BusId to_bus;
  double p = 0.0;  // pu sending-end real flow
  double q = 0.0;  // pu sending-end reactive flow
  double l = 0.0;  // pu^2 squared current
};

struct DerDispatchRecord {
  BusId bus;
  double p = 0.0;  // pu
  double q = 0.0;  // pu
};

struct OpfSolution {
  std::map<BusId, double> v2;            // pu^2 per bus
  std::vector<LineFlowRecord> flows;     // feeder line order
  std::vector<DerDispatchRecord> ders;   // sorted by bus id
  double objective_pu = 0.0;             // total losses sum(r*l), pu
  double penalty_pu = 0.0;               // PV-type penalty part of the solver objective
  std::string status;                    // nlp-core status string
  std::vector<std::string> binding;      // constraints within 1e-5 of their bound
};

}  // namespace dgopf
