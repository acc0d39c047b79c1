from fastapi import FastAPI
from fastapi.responses import JSONResponse
from datetime import datetime

from app.config import configure_logging, settings
from app.errors import FdToolkitError
from app.middleware import LoggingMiddleware
from app.routers import calibration, fd

configure_logging()

app = FastAPI(title="Signalized Segment FD Toolkit")

app.add_middleware(LoggingMiddleware)

env = settings.ENVIRONMENT

# Register routers
app.include_router(fd.router, prefix="/api/v1")
app.include_router(calibration.router, prefix="/api/v1")


@app.exception_handler(FdToolkitError)
async def toolkit_error_handler(request, exc: FdToolkitError):
    return JSONResponse({"detail": str(exc)}, status_code=422)


@app.get("/")
async def root():
    return {"message": f"Signalized Segment FD Toolkit API is running - {env} environment"}


@app.get("/api/v1/health")
async def health_check():
    """Health check endpoint for monitoring"""
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}
