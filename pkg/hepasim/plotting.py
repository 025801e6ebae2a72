"""
A small line-chart emitter for trajectories, rendered to SVG through a jinja2
template with a fixed 800x600 viewBox.

Axis scaling: each axis spans the data range of every series and polygon on
the chart, widened by 5% on both sides. A degenerate range [a, a] becomes
[a - 1, a + 1]. Data coordinates map linearly onto the plot area, with y
growing upwards.
"""

from enum import StrEnum
from pathlib import Path

from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel, ConfigDict, Field

from hepasim.functionals import (
    EnvelopeConstant,
    Trajectory,
    envelope_E,
    sigma_region,
)

TEMPLATES = Path(__file__).parent / "templates"

WIDTH = 800
HEIGHT = 600
MARGIN_LEFT = 80
MARGIN_RIGHT = 40
MARGIN_TOP = 50
MARGIN_BOTTOM = 70
PADDING = 0.05
TICKS = 5

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

type Point = tuple[float, float]


class PlotKind(StrEnum):
    TIMESERIES = "timeseries"
    PHASE = "phase"
    ENVELOPE = "envelope"


class Series(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    points: list[Point] = Field(min_length=1)
    color: str = COLORS[0]


class Chart(BaseModel):
    """
    A chart in data coordinates. Polygons are drawn filled and translucent,
    beneath the series.
    """

    model_config = ConfigDict(frozen=True)

    title: str
    x_label: str
    y_label: str
    series: list[Series]
    polygons: list[Series] = Field(default_factory=list)


class Axis(BaseModel):
    model_config = ConfigDict(frozen=True)

    low: float
    high: float

    @classmethod
    def spanning(cls, values: list[float]) -> Axis:
        """
        Example:
            >>> Axis.spanning([0.0, 10.0])
            Axis(low=-0.5, high=10.5)
            >>> Axis.spanning([2.0])
            Axis(low=1.0, high=3.0)
        """
        low, high = min(values), max(values)

        if high == low:
            return cls(low=low - 1.0, high=high + 1.0)

        pad = PADDING * (high - low)
        return cls(low=low - pad, high=high + pad)

    def ticks(self) -> list[float]:
        step = (self.high - self.low) / (TICKS - 1)
        return [self.low + k * step for k in range(TICKS)]


class Frame(BaseModel):
    """Maps data coordinates to viewBox coordinates."""

    model_config = ConfigDict(frozen=True)

    x: Axis
    y: Axis

    @property
    def plot_width(self) -> float:
        return WIDTH - MARGIN_LEFT - MARGIN_RIGHT

    @property
    def plot_height(self) -> float:
        return HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(self, x: float) -> float:
        return (
            MARGIN_LEFT
            + (x - self.x.low) / (self.x.high - self.x.low) * self.plot_width
        )

    def py(self, y: float) -> float:
        return (
            MARGIN_TOP
            + (self.y.high - y) / (self.y.high - self.y.low) * self.plot_height
        )

    def points(self, points: list[Point]) -> str:
        return " ".join(f"{self.px(x):.3f},{self.py(y):.3f}" for x, y in points)


def frame_for(chart: Chart) -> Frame:
    every = [point for group in chart.series + chart.polygons for point in group.points]
    return Frame(
        x=Axis.spanning([x for x, _ in every]),
        y=Axis.spanning([y for _, y in every]),
    )


def render_svg(chart: Chart) -> str:
    if not chart.series:
        raise ValueError("A chart needs at least one series.")

    frame = frame_for(chart)
    env = Environment(loader=FileSystemLoader(TEMPLATES), autoescape=True)
    template = env.get_template("chart.svg.j2")

    return template.render(
        chart=chart,
        frame=frame,
        width=WIDTH,
        height=HEIGHT,
        x_ticks=[(frame.px(t), f"{t:.3g}") for t in frame.x.ticks()],
        y_ticks=[(frame.py(t), f"{t:.3g}") for t in frame.y.ticks()],
    )


def timeseries_chart(trajectory: Trajectory) -> Chart:
    times = trajectory.times
    totals = {"U": trajectory.column("U"), "V": trajectory.column("V")}

    return Chart(
        title="Total amounts over time",
        x_label="t",
        y_label="U, V",
        series=[
            Series(label=name, points=list(zip(times, values.tolist())), color=color)
            for (name, values), color in zip(totals.items(), COLORS)
        ],
    )


def phase_chart(trajectory: Trajectory) -> Chart:
    """V against U, over the trapezoid the pair must stay in."""
    region = sigma_region(trajectory.params, trajectory.omega_area)
    path = list(
        zip(trajectory.column("U").tolist(), trajectory.column("V").tolist())
    )

    return Chart(
        title="Phase plane",
        x_label="U",
        y_label="V",
        series=[Series(label="(U, V)", points=path, color=COLORS[0])],
        polygons=[Series(label="Σ", points=region.vertices(), color=COLORS[2])],
    )


def envelope_chart(
    trajectory: Trajectory, variant: EnvelopeConstant = EnvelopeConstant.BOUND
) -> Chart:
    envelope = envelope_E(trajectory, trajectory.params, trajectory.chi_max, variant)
    psi = list(zip(trajectory.times, trajectory.column("psi").tolist()))

    return Chart(
        title="L2 functional and its envelope",
        x_label="t",
        y_label="Psi, E",
        series=[
            Series(label="Psi", points=psi, color=COLORS[0]),
            Series(label="E", points=envelope, color=COLORS[1]),
        ],
    )


def chart_for(
    trajectory: Trajectory,
    kind: PlotKind,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> Chart:
    match kind:
        case PlotKind.TIMESERIES:
            return timeseries_chart(trajectory)
        case PlotKind.PHASE:
            return phase_chart(trajectory)
        case PlotKind.ENVELOPE:
            return envelope_chart(trajectory, variant)


def write_plot(
    trajectory: Trajectory,
    kind: PlotKind,
    path: Path,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> None:
    path.write_text(
        render_svg(chart_for(trajectory, kind, variant)), encoding="utf-8", newline="\n"
    )
