use std::io::Write;

use super::StepOutcome;
use crate::error::Result;

/// Per-step CSV trace:
/// `frame,x,y,theta,speed,steer,accel,r_dist,r_yaw,collision_class`.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record([
            "frame",
            "x",
            "y",
            "theta",
            "speed",
            "steer",
            "accel",
            "r_dist",
            "r_yaw",
            "collision_class",
        ])?;
        Ok(Self { inner })
    }

    pub fn record(&mut self, out: &StepOutcome) -> Result<()> {
        let class = out.collision.map(|c| c.class.as_str()).unwrap_or("");
        self.inner.write_record([
            out.frame.to_string(),
            out.ego.pose.x.to_string(),
            out.ego.pose.y.to_string(),
            out.ego.pose.theta.to_string(),
            out.ego.speed.to_string(),
            out.applied.steer.to_string(),
            out.applied.accel.to_string(),
            out.reward_terms.dist.to_string(),
            out.reward_terms.yaw.to_string(),
            class.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(self
            .inner
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?)
    }
}
