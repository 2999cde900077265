#ifndef QBOOST_QBOOST_HPP
#define QBOOST_QBOOST_HPP

#include <qboost/types.hpp>
#include <qboost/auction.hpp>
#include <qboost/boost.hpp>
#include <qboost/surrogate.hpp>
#include <qboost/net.hpp>
#include <qboost/environment.hpp>
#include <qboost/episode.hpp>
#include <qboost/learner.hpp>
#include <qboost/report.hpp>
#include <qboost/verify.hpp>

#endif  // QBOOST_QBOOST_HPP
