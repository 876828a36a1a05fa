#ifndef TBN_TBN_HPP
#define TBN_TBN_HPP

#include "tbn/error.hpp"
#include "tbn/factor.hpp"
#include "tbn/model.hpp"
#include "tbn/oracle.hpp"
#include "tbn/plan.hpp"
#include "tbn/planner.hpp"
#include "tbn/runtime.hpp"
#include "tbn/stream.hpp"

#endif // TBN_TBN_HPP
