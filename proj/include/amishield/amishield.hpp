#ifndef AMISHIELD_AMISHIELD_HPP
#define AMISHIELD_AMISHIELD_HPP

#include "amishield/error.hpp"
#include "amishield/random.hpp"
#include "amishield/pcap.hpp"
#include "amishield/bytevis.hpp"
#include "amishield/png.hpp"
#include "amishield/detector.hpp"
#include "amishield/corpus.hpp"
#include "amishield/aggen.hpp"
#include "amishield/bag.hpp"
#include "amishield/mitigator.hpp"
#include "amishield/planner.hpp"
#include "amishield/sim.hpp"

#endif  // AMISHIELD_AMISHIELD_HPP
