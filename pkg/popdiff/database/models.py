from datetime import datetime

from sqlalchemy import BigInteger, Column, DateTime, Integer, String, Text  # type: ignore
from sqlalchemy.orm import declarative_base  # type: ignore

Base = declarative_base()


class RunReport(Base):
    __tablename__ = "run_reports"

    id = Column(Integer, primary_key=True, autoincrement=True)
    subcommand = Column(String(50), nullable=False)
    seed = Column(BigInteger, nullable=False)
    backend = Column(String(20), nullable=False)
    version = Column(String(20), nullable=False)
    exit_code = Column(Integer, nullable=False, default=0)
    payload = Column(Text, nullable=False)  # JSON-строка отчёта
    timestamp = Column(DateTime, default=datetime.utcnow)


class RunLog(Base):
    __tablename__ = "run_logs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    level = Column(String(20), nullable=False)  # ERROR, INFO, WARNING
    message = Column(String(255), nullable=False)
    timestamp = Column(DateTime, default=datetime.utcnow)
