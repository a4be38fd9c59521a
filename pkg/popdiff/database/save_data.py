from sqlalchemy.orm import Session  # type: ignore

from popdiff.database.models import RunLog, RunReport


def save_report(db: Session, subcommand: str, seed: int, backend: str, version: str, payload: str, exit_code: int = 0):
    report = RunReport(
        subcommand=subcommand,
        seed=seed,
        backend=backend,
        version=version,
        payload=payload,
        exit_code=exit_code,
    )
    db.add(report)
    db.commit()
    return report


def save_log(db: Session, level: str, message: str):
    log_entry = RunLog(level=level, message=message[:255])
    db.add(log_entry)
    db.commit()


def fetch_reports(db: Session, subcommand: str | None = None, limit: int = 20):
    query = db.query(RunReport)
    if subcommand:
        query = query.filter(RunReport.subcommand == subcommand)
    return query.order_by(RunReport.id.desc()).limit(limit).all()
